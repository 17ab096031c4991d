// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sam_align/errors.hpp"

namespace sam_align {

class MalformedKml : public Error {
 public:
  MalformedKml(std::size_t offset, const std::string& element_path, const std::string& what);

  std::size_t offset;
  std::string element_path;
};

struct KmlPlacemark {
  // 1-based position among all Placemarks in the document.
  std::size_t ordinal = 0;
  std::size_t offset = 0;
  std::optional<std::string> name;
  // Text of the first Point/coordinates inside the Placemark, entity-decoded.
  std::optional<std::string> point_coordinates;
};

// Streams the document once and collects Placemarks in document order.
// Namespace prefixes are ignored. Throws MalformedKml on broken XML.
std::vector<KmlPlacemark> read_placemarks(std::string_view xml);

}  // namespace sam_align
