// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "kml_reference.hpp"
#include "sam_align/geo_ingest.hpp"

using namespace sam_align;

namespace {

using fixtures::kFixtureKml;
using fixtures::reference_read;

std::vector<std::byte> kmz(const std::string& kml, bool deflate) {
  return fixtures::as_bytes(fixtures::make_zip({{"readme.txt", "fixture", false}, {"doc.kml", kml, deflate}}));
}

}  // namespace

TEST(ParseKmz, FixtureMatchesHandValuesAndReferenceReader) {
  for (bool deflate : {false, true}) {
    const auto result = parse_kmz(kmz(kFixtureKml, deflate));
    ASSERT_EQ(result.sites.size(), 2u);
    EXPECT_EQ(result.warnings.size(), 1u);

    // Hand-checked values.
    EXPECT_EQ(result.sites[0].id, "kmz-000001");
    EXPECT_EQ(result.sites[0].point, (GeoPoint{32.85, 39.93}));
    EXPECT_EQ(result.sites[0].name, "Ankara");
    EXPECT_EQ(result.sites[1].id, "kmz-000003");
    EXPECT_EQ(result.sites[1].point, (GeoPoint{-117.5, 34.25}));
    EXPECT_EQ(result.sites[1].name, "Battery & radar");
    for (const auto& s : result.sites) EXPECT_EQ(s.source, SiteSource::SamKmz);

    const auto ref = reference_read(kFixtureKml);
    ASSERT_EQ(ref.size(), result.sites.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_EQ(ref[i].name, result.sites[i].name);
      EXPECT_EQ(ref[i].lon, result.sites[i].point.lon);
      EXPECT_EQ(ref[i].lat, result.sites[i].point.lat);
    }
  }
}

TEST(ParseKmz, IsPure) {
  const auto bytes = kmz(kFixtureKml, true);
  EXPECT_EQ(parse_kmz(bytes).sites, parse_kmz(bytes).sites);
}

TEST(ParseKmz, ZeroPlacemarks) {
  const auto r = parse_kmz(kmz("<kml><Document><name>empty</name></Document></kml>", false));
  EXPECT_TRUE(r.sites.empty());
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ParseKmz, NamespacePrefixesAreIgnored) {
  const auto r = parse_kml(
      "<k:kml xmlns:k=\"http://www.opengis.net/kml/2.2\"><k:Placemark><k:Point><k:coordinates>1.5,-2.5"
      "</k:coordinates></k:Point></k:Placemark></k:kml>");
  ASSERT_EQ(r.sites.size(), 1u);
  EXPECT_EQ(r.sites[0].point, (GeoPoint{1.5, -2.5}));
  EXPECT_FALSE(r.sites[0].name.has_value());
}

TEST(ParseKmz, BadCoordinatesAreWarnings) {
  const auto r = parse_kml(
      "<kml><Placemark><Point><coordinates>abc</coordinates></Point></Placemark>"
      "<Placemark><Point><coordinates>200,10,0</coordinates></Point></Placemark></kml>");
  EXPECT_TRUE(r.sites.empty());
  EXPECT_EQ(r.warnings.size(), 2u);
}

TEST(ParseKmz, Errors) {
  EXPECT_THROW(parse_kmz(fixtures::as_bytes("this is not a zip archive at all")), NotAZip);
  EXPECT_THROW(parse_kmz(fixtures::as_bytes(fixtures::make_zip({{"a.txt", "x", false}}))), NoKmlEntry);
  try {
    parse_kml("<kml><Document><Placemark><name>x</Document></kml>");
    FAIL() << "expected MalformedKml";
  } catch (const MalformedKml& ex) {
    EXPECT_EQ(ex.offset, 33u);
    EXPECT_EQ(ex.element_path, "kml/Document/Placemark/name");
  }
  EXPECT_THROW(parse_kml("<kml><Placemark>"), MalformedKml);
  EXPECT_THROW(parse_kml("<kml></kml><extra/>"), MalformedKml);
}

TEST(ZipArchive, CorruptCrcIsRejected) {
  auto zip = fixtures::make_zip({{"doc.kml", "<kml/>", false}});
  const auto pos = zip.find("<kml/>");
  zip[pos + 1] = 'K';
  EXPECT_THROW(read_zip(fixtures::as_bytes(zip)), NotAZip);
}

TEST(WorldCities, ParsesHeaderInAnyOrder) {
  const auto cities = parse_world_cities("\xEF\xBB\xBFid,lng,city,lat\n1,32.85,\"Ankara, TR\",39.93\n2,-0.1,London,51.5\n");
  ASSERT_EQ(cities.size(), 2u);
  EXPECT_EQ(cities[0].name, "Ankara, TR");
  EXPECT_EQ(cities[0].point, (GeoPoint{32.85, 39.93}));
  EXPECT_THROW(parse_world_cities("name,lat,lng\nx,1,2\n"), MalformedCsv);
  EXPECT_THROW(parse_world_cities("city,lat,lng\nx,abc,2\n"), MalformedCsv);
  EXPECT_THROW(parse_world_cities("city,lat,lng\nx,95,2\n"), MalformedCsv);
}

TEST(SampleCityPoints, EdgeCases) {
  const std::vector<City> origin{{"Null Island", {0.0, 0.0}}};
  EXPECT_TRUE(sample_city_points(origin, 0, 0.05, 1).empty());
  EXPECT_TRUE(sample_city_points({}, 0, 0.05, 1).empty());
  EXPECT_THROW(sample_city_points({}, 1, 0.05, 1), EmptyCityList);
  for (const auto& s : sample_city_points(origin, 5, 0.0, 7)) {
    EXPECT_EQ(s.point, (GeoPoint{0.0, 0.0}));
    EXPECT_EQ(s.source, SiteSource::WorldCities);
  }
}

TEST(SampleCityPoints, BoundDeterminismAndClamping) {
  const std::vector<City> cities{{"A", {10.0, 10.0}}, {"B", {-50.0, 20.0}}, {"Pole", {179.99, 89.99}}};
  const auto a = sample_city_points(cities, 1000, 0.05, 3);
  EXPECT_EQ(a, sample_city_points(cities, 1000, 0.05, 3));
  EXPECT_EQ(a.front().id, "wc-3-000001");
  for (const auto& s : a) {
    EXPECT_TRUE(s.point.valid());
    const bool near = std::any_of(cities.begin(), cities.end(), [&](const City& c) {
      return c.name == s.name && std::abs(s.point.lon - c.point.lon) <= 0.05 && std::abs(s.point.lat - c.point.lat) <= 0.05;
    });
    EXPECT_TRUE(near);
  }
  EXPECT_NE(a, sample_city_points(cities, 1000, 0.05, 4));
}
