// SPDX-License-Identifier: Apache-2.0

#include "sam_align/geo_ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <boost/tokenizer.hpp>
#include <fmt/format.h>

#include "sam_align/random.hpp"

namespace sam_align {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<double> to_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// "lon,lat[,alt]" from the first whitespace-separated tuple.
std::optional<GeoPoint> parse_coordinate_tuple(std::string_view text) {
  text = trim(text);
  const auto space = std::find_if(text.begin(), text.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  const std::string_view tuple = text.substr(0, static_cast<std::size_t>(space - text.begin()));
  const auto c1 = tuple.find(',');
  if (c1 == std::string_view::npos) return std::nullopt;
  const auto c2 = tuple.find(',', c1 + 1);
  const auto lon = to_double(tuple.substr(0, c1));
  const auto lat = to_double(tuple.substr(c1 + 1, c2 == std::string_view::npos ? std::string_view::npos : c2 - c1 - 1));
  if (!lon || !lat) return std::nullopt;
  if (c2 != std::string_view::npos && !to_double(tuple.substr(c2 + 1))) return std::nullopt;
  return GeoPoint{*lon, *lat};
}

bool ends_with_kml(const std::string& name) {
  if (name.size() < 4) return false;
  std::string ext = name.substr(name.size() - 4);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".kml";
}

}  // namespace

IngestResult parse_kml(std::string_view xml) {
  IngestResult out;
  for (const auto& pm : read_placemarks(xml)) {
    const std::string label = pm.name ? fmt::format("Placemark {} ('{}')", pm.ordinal, *pm.name)
                                      : fmt::format("Placemark {}", pm.ordinal);
    if (!pm.point_coordinates) {
      out.warnings.push_back(fmt::format("{} at byte {}: no Point coordinates, skipped", label, pm.offset));
      continue;
    }
    const auto point = parse_coordinate_tuple(*pm.point_coordinates);
    if (!point) {
      out.warnings.push_back(fmt::format("{} at byte {}: unparseable coordinates '{}', skipped", label, pm.offset,
                                         trim(*pm.point_coordinates)));
      continue;
    }
    if (!point->valid()) {
      out.warnings.push_back(fmt::format("{} at byte {}: coordinates out of range, skipped", label, pm.offset));
      continue;
    }
    SiteRecord site{fmt::format("kmz-{:06}", pm.ordinal), *point, SiteSource::SamKmz, std::nullopt};
    if (pm.name) {
      const auto name = trim(*pm.name);
      if (!name.empty()) site.name = std::string(name);
    }
    out.sites.push_back(std::move(site));
  }
  return out;
}

IngestResult parse_kmz(std::span<const std::byte> archive) {
  for (const auto& entry : read_zip(archive)) {
    if (!ends_with_kml(entry.name)) continue;
    return parse_kml(std::string_view(reinterpret_cast<const char*>(entry.data.data()), entry.data.size()));
  }
  throw NoKmlEntry();
}

std::vector<City> parse_world_cities(std::string_view csv) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t lineno = 0;
  int city_col = -1, lat_col = -1, lng_col = -1;
  std::vector<City> cities;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    try {
      const Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
      for (const auto& f : tok) fields.emplace_back(trim(f));
    } catch (const boost::escaped_list_error& ex) {
      throw MalformedCsv(fmt::format("line {}: {}", lineno, ex.what()));
    }
    if (city_col < 0) {
      for (int i = 0; i < static_cast<int>(fields.size()); ++i) {
        std::string h = fields[static_cast<std::size_t>(i)];
        std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
        if (h == "city" && city_col < 0) city_col = i;
        if (h == "lat" && lat_col < 0) lat_col = i;
        if (h == "lng" && lng_col < 0) lng_col = i;
      }
      if (city_col < 0 || lat_col < 0 || lng_col < 0) throw MalformedCsv("header must name city, lat and lng columns");
      continue;
    }
    const auto need = static_cast<std::size_t>(std::max({city_col, lat_col, lng_col}));
    if (fields.size() <= need) throw MalformedCsv(fmt::format("line {}: expected at least {} fields", lineno, need + 1));
    const auto lat = to_double(fields[static_cast<std::size_t>(lat_col)]);
    const auto lng = to_double(fields[static_cast<std::size_t>(lng_col)]);
    if (!lat || !lng) throw MalformedCsv(fmt::format("line {}: non-numeric lat/lng", lineno));
    const GeoPoint p{*lng, *lat};
    if (!p.valid()) throw MalformedCsv(fmt::format("line {}: coordinates out of range", lineno));
    cities.push_back({fields[static_cast<std::size_t>(city_col)], p});
  }
  if (city_col < 0) throw MalformedCsv("missing header row");
  return cities;
}

std::vector<SiteRecord> sample_city_points(std::span<const City> cities, std::size_t n, double perturb_radius,
                                           std::uint64_t seed) {
  if (!(perturb_radius >= 0.0) || !std::isfinite(perturb_radius)) {
    throw Error("InvalidArgument", "perturb_radius must be finite and >= 0");
  }
  if (n > 0 && cities.empty()) throw EmptyCityList();
  std::mt19937_64 rng(seed);
  std::vector<SiteRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const City& city = cities[uniform_index(rng, cities.size())];
    const double dlon = (2.0 * uniform01(rng) - 1.0) * perturb_radius;
    const double dlat = (2.0 * uniform01(rng) - 1.0) * perturb_radius;
    const GeoPoint p{std::clamp(city.point.lon + dlon, -180.0, 180.0), std::clamp(city.point.lat + dlat, -90.0, 90.0)};
    out.push_back({fmt::format("wc-{}-{:06}", seed, i + 1), p, SiteSource::WorldCities, city.name});
  }
  return out;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", "cannot open " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(buf.size());
  std::transform(buf.begin(), buf.end(), out.begin(), [](char c) { return static_cast<std::byte>(c); });
  return out;
}

}  // namespace sam_align
