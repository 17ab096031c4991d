// SPDX-License-Identifier: Apache-2.0

#include "sam_align/kml_reader.hpp"

#include <cstdint>

#include <fmt/format.h>

namespace sam_align {

MalformedKml::MalformedKml(std::size_t off, const std::string& path, const std::string& what)
    : Error("MalformedKml", fmt::format("{} at byte {} (/{})", what, off, path)), offset(off), element_path(path) {}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
         c == '.' || c == ':' || static_cast<unsigned char>(c) >= 0x80;
}

std::string_view local_name(std::string_view qname) {
  const auto colon = qname.rfind(':');
  return colon == std::string_view::npos ? qname : qname.substr(colon + 1);
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Scanner {
 public:
  explicit Scanner(std::string_view xml) : xml_(xml) {}

  std::vector<KmlPlacemark> run() {
    while (pos_ < xml_.size()) {
      if (xml_[pos_] == '<') {
        markup();
      } else {
        const auto end = xml_.find('<', pos_);
        const auto stop = end == std::string_view::npos ? xml_.size() : end;
        text(decode(xml_.substr(pos_, stop - pos_), pos_));
        pos_ = stop;
      }
    }
    if (!stack_.empty()) fail(xml_.size(), "unexpected end of document, unclosed <" + stack_.back() + ">");
    if (!seen_root_) fail(0, "no root element");
    return std::move(placemarks_);
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    std::string path;
    for (const auto& s : stack_) path += (path.empty() ? "" : "/") + s;
    throw MalformedKml(at, path, what);
  }

  void expect(std::string_view token, std::size_t from, const std::string& what) {
    const auto end = xml_.find(token, from);
    if (end == std::string_view::npos) fail(pos_, what);
    pos_ = end + token.size();
  }

  void markup() {
    const std::size_t start = pos_;
    const std::string_view rest = xml_.substr(pos_);
    if (rest.starts_with("<!--")) {
      expect("-->", pos_ + 4, "unterminated comment");
    } else if (rest.starts_with("<![CDATA[")) {
      const auto end = xml_.find("]]>", pos_ + 9);
      if (end == std::string_view::npos) fail(start, "unterminated CDATA section");
      if (stack_.empty()) fail(start, "CDATA outside the root element");
      text(std::string(xml_.substr(pos_ + 9, end - pos_ - 9)));
      pos_ = end + 3;
    } else if (rest.starts_with("<?")) {
      expect("?>", pos_ + 2, "unterminated processing instruction");
    } else if (rest.starts_with("<!")) {
      doctype();
    } else if (rest.starts_with("</")) {
      end_tag();
    } else {
      start_tag();
    }
  }

  void doctype() {
    int depth = 0;
    for (std::size_t i = pos_; i < xml_.size(); ++i) {
      if (xml_[i] == '[') ++depth;
      if (xml_[i] == ']') --depth;
      if (xml_[i] == '>' && depth <= 0) {
        pos_ = i + 1;
        return;
      }
    }
    fail(pos_, "unterminated declaration");
  }

  std::string_view read_name() {
    const std::size_t begin = pos_;
    while (pos_ < xml_.size() && is_name_char(xml_[pos_])) ++pos_;
    if (pos_ == begin) fail(begin, "expected a name");
    return xml_.substr(begin, pos_ - begin);
  }

  void skip_space() {
    while (pos_ < xml_.size() && is_space(xml_[pos_])) ++pos_;
  }

  void start_tag() {
    const std::size_t start = pos_;
    ++pos_;
    const std::string qname(read_name());
    if (stack_.empty() && seen_root_) fail(start, "content after the root element");
    for (;;) {
      skip_space();
      if (pos_ >= xml_.size()) fail(start, "unterminated start tag <" + qname + ">");
      if (xml_.substr(pos_).starts_with("/>")) {
        pos_ += 2;
        open(qname, start);
        close(start);
        return;
      }
      if (xml_[pos_] == '>') {
        ++pos_;
        open(qname, start);
        return;
      }
      read_name();
      skip_space();
      if (pos_ >= xml_.size() || xml_[pos_] != '=') fail(pos_, "expected '=' in attribute of <" + qname + ">");
      ++pos_;
      skip_space();
      if (pos_ >= xml_.size() || (xml_[pos_] != '"' && xml_[pos_] != '\'')) fail(pos_, "expected quoted attribute");
      const char quote = xml_[pos_];
      const auto end = xml_.find(quote, pos_ + 1);
      if (end == std::string_view::npos) fail(pos_, "unterminated attribute value");
      decode(xml_.substr(pos_ + 1, end - pos_ - 1), pos_ + 1);
      pos_ = end + 1;
    }
  }

  void end_tag() {
    const std::size_t start = pos_;
    pos_ += 2;
    const std::string_view qname = read_name();
    skip_space();
    if (pos_ >= xml_.size() || xml_[pos_] != '>') fail(start, "unterminated end tag");
    ++pos_;
    if (stack_.empty()) fail(start, "unexpected </" + std::string(qname) + ">");
    if (stack_.back() != qname) fail(start, "mismatched </" + std::string(qname) + ">, expected </" + stack_.back() + ">");
    close(start);
  }

  void open(const std::string& qname, std::size_t at) {
    seen_root_ = true;
    stack_.push_back(qname);
    const auto name = local_name(qname);
    if (name == "Placemark") {
      if (placemark_depth_) fail(at, "nested Placemark");
      placemark_depth_ = stack_.size();
      placemarks_.push_back({placemarks_.size() + 1, at, std::nullopt, std::nullopt});
    } else if (placemark_depth_) {
      if (name == "Point" && !point_depth_) point_depth_ = stack_.size();
      if (capture_ != Capture::None) return;
      if (name == "name" && stack_.size() == placemark_depth_ + 1) {
        capture_ = Capture::Name;
        buffer_.clear();
      } else if (name == "coordinates" && point_depth_ && !placemarks_.back().point_coordinates) {
        capture_ = Capture::Coordinates;
        buffer_.clear();
      }
    }
  }

  void close(std::size_t) {
    const std::size_t depth = stack_.size();
    if (capture_ != Capture::None && placemark_depth_) {
      const auto name = local_name(stack_.back());
      if (capture_ == Capture::Name && name == "name") {
        placemarks_.back().name = buffer_;
        capture_ = Capture::None;
      } else if (capture_ == Capture::Coordinates && name == "coordinates") {
        placemarks_.back().point_coordinates = buffer_;
        capture_ = Capture::None;
      }
    }
    if (depth == point_depth_) point_depth_ = 0;
    if (depth == placemark_depth_) {
      placemark_depth_ = 0;
      capture_ = Capture::None;
    }
    stack_.pop_back();
  }

  void text(const std::string& chunk) {
    if (stack_.empty()) {
      for (const char c : chunk) {
        if (!is_space(c)) fail(pos_, "text outside the root element");
      }
      return;
    }
    if (capture_ != Capture::None) buffer_ += chunk;
  }

  std::string decode(std::string_view raw, std::size_t base) const {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] != '&') {
        out += raw[i];
        continue;
      }
      const auto semi = raw.find(';', i);
      if (semi == std::string_view::npos) fail(base + i, "unterminated entity reference");
      const std::string_view ent = raw.substr(i + 1, semi - i - 1);
      if (ent == "amp") out += '&';
      else if (ent == "lt") out += '<';
      else if (ent == "gt") out += '>';
      else if (ent == "quot") out += '"';
      else if (ent == "apos") out += '\'';
      else if (ent.size() > 1 && ent[0] == '#') {
        const bool hex = ent[1] == 'x' || ent[1] == 'X';
        const std::string digits(ent.substr(hex ? 2 : 1));
        std::size_t used = 0;
        unsigned long cp = 0;
        try {
          cp = std::stoul(digits, &used, hex ? 16 : 10);
        } catch (const std::exception&) {
          used = 0;
        }
        if (digits.empty() || used != digits.size() || cp > 0x10FFFF) fail(base + i, "bad character reference");
        append_utf8(out, static_cast<std::uint32_t>(cp));
      } else {
        fail(base + i, "unknown entity &" + std::string(ent) + ";");
      }
      i = semi;
    }
    return out;
  }

  enum class Capture { None, Name, Coordinates };

  std::string_view xml_;
  std::size_t pos_ = 0;
  std::vector<std::string> stack_;
  bool seen_root_ = false;
  std::size_t placemark_depth_ = 0;
  std::size_t point_depth_ = 0;
  Capture capture_ = Capture::None;
  std::string buffer_;
  std::vector<KmlPlacemark> placemarks_;
};

}  // namespace

std::vector<KmlPlacemark> read_placemarks(std::string_view xml) { return Scanner(xml).run(); }

}  // namespace sam_align
