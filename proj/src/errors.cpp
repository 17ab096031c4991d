// SPDX-License-Identifier: Apache-2.0

#include "sam_align/errors.hpp"

namespace sam_align {

Error::Error(std::string kind, const std::string& message)
    : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

}  // namespace sam_align
