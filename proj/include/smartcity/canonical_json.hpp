#pragma once

// Canonical JSON: sorted object keys (bytewise), no insignificant whitespace,
// UTF-8 output, integers only. The canonical bytes of a value are what gets
// hashed and signed everywhere in the ledger.

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "smartcity/bytes.hpp"
#include "smartcity/error.hpp"

namespace smartcity {

using Json = nlohmann::json;

enum class CanonicalErrc { NotJson, FloatingPoint, NotCanonical };

using CanonicalError = CodedError<CanonicalErrc>;

/// Serializes to canonical bytes. Throws CanonicalError(FloatingPoint) if the
/// value contains a non-integer number anywhere.
std::string canonical_dump(const Json& value);

/// Parses `text` and checks it is already in canonical form byte-for-byte.
/// Returns the parsed value; throws CanonicalError describing the first issue.
Json parse_canonical(std::string_view text);

/// Parses arbitrary JSON text (any key order / whitespace). Throws
/// CanonicalError(NotJson) on syntax errors.
Json parse_json(std::string_view text);

/// Null if `text` is canonical, else a short description of the violation.
std::optional<std::string> canonical_violation(std::string_view text);

inline Digest canonical_digest(const Json& value) { return sha256(canonical_dump(value)); }

}  // namespace smartcity
