// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sam_align/errors.hpp"

namespace sam_align {

class NotAZip : public Error {
 public:
  explicit NotAZip(const std::string& message) : Error("NotAZip", message) {}
};

struct ZipEntry {
  std::string name;
  std::vector<std::byte> data;
};

// Reads every file entry of an in-memory archive in central-directory order.
// Supports stored and deflated entries; CRCs are verified.
std::vector<ZipEntry> read_zip(std::span<const std::byte> archive);

}  // namespace sam_align
