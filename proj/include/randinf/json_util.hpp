#pragma once

#include <cmath>
#include <json.hpp>

namespace randinf {

using Json = nlohmann::ordered_json;

/// Finite values as JSON numbers, infinities as the strings "inf" / "-inf".
inline Json json_number(double v) {
  if (std::isfinite(v)) return Json(v);
  if (std::isnan(v)) return Json("nan");
  return Json(v > 0 ? "inf" : "-inf");
}

}  // namespace randinf
