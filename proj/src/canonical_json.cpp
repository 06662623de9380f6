#include "smartcity/canonical_json.hpp"

namespace smartcity {

namespace {

bool contains_float(const Json& v) {
  switch (v.type()) {
    case Json::value_t::number_float:
      return true;
    case Json::value_t::array:
    case Json::value_t::object:
      for (const auto& child : v) {
        if (contains_float(child)) return true;
      }
      return false;
    default:
      return false;
  }
}

}  // namespace

std::string canonical_dump(const Json& value) {
  if (contains_float(value)) {
    throw CanonicalError(CanonicalErrc::FloatingPoint,
                         "floating-point numbers are not allowed in canonical JSON");
  }
  // nlohmann::json keeps object members in a std::map, so dump() already
  // emits keys in bytewise order; strict UTF-8 handling throws on bad input.
  return value.dump(-1, ' ', false, Json::error_handler_t::strict);
}

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw CanonicalError(CanonicalErrc::NotJson, e.what());
  }
}

Json parse_canonical(std::string_view text) {
  Json value = parse_json(text);
  if (contains_float(value)) {
    throw CanonicalError(CanonicalErrc::FloatingPoint,
                         "floating-point numbers are not allowed in canonical JSON");
  }
  if (canonical_dump(value) != text) {
    throw CanonicalError(CanonicalErrc::NotCanonical,
                         "JSON is not in canonical form (key order, whitespace or escaping)");
  }
  return value;
}

std::optional<std::string> canonical_violation(std::string_view text) {
  try {
    parse_canonical(text);
    return std::nullopt;
  } catch (const CanonicalError& e) {
    switch (e.code()) {
      case CanonicalErrc::NotJson:
        return std::string("not-json");
      case CanonicalErrc::FloatingPoint:
        return std::string("float");
      case CanonicalErrc::NotCanonical:
        return std::string("non-canonical");
    }
  }
  return std::nullopt;
}

}  // namespace smartcity
