// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace lmtc {

// Every recoverable failure in the library surfaces as this type. The CLI
// maps it to a nonzero exit status with the message on stderr.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lmtc
