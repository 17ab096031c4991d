// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sam_align/errors.hpp"
#include "sam_align/kml_reader.hpp"
#include "sam_align/records.hpp"
#include "sam_align/zip_archive.hpp"

namespace sam_align {

class NoKmlEntry : public Error {
 public:
  NoKmlEntry() : Error("NoKmlEntry", "archive contains no .kml document") {}
};

class EmptyCityList : public Error {
 public:
  EmptyCityList() : Error("EmptyCityList", "cannot sample points from an empty city list") {}
};

class MalformedCsv : public Error {
 public:
  explicit MalformedCsv(const std::string& message) : Error("MalformedCsv", message) {}
};

struct IngestResult {
  std::vector<SiteRecord> sites;
  // One line per skipped Placemark.
  std::vector<std::string> warnings;
};

// Placemarks with a Point become SamKmz sites with ids "kmz-NNNNNN" taken
// from the Placemark ordinal, so ids stay stable when a neighbour is skipped.
// Altitude is dropped.
IngestResult parse_kml(std::string_view xml);

// Uses the first .kml entry of the archive.
IngestResult parse_kmz(std::span<const std::byte> archive);

struct City {
  std::string name;
  GeoPoint point;
};

// CSV with a header naming at least `city`, `lat` and `lng` (any order,
// other columns ignored). Quoted fields are supported.
std::vector<City> parse_world_cities(std::string_view csv);

inline constexpr double kDefaultPerturbRadius = 0.05;

// n uniformly chosen cities, each offset by an independent uniform draw in
// [-radius, radius] per axis and clamped to the valid range. Ids are
// "wc-<seed>-NNNNNN".
std::vector<SiteRecord> sample_city_points(std::span<const City> cities, std::size_t n, double perturb_radius,
                                           std::uint64_t seed);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

}  // namespace sam_align
