// Copyright (c) 2026, proxlab developers
// SPDX-License-Identifier: Apache-2.0
//
// Policy checkpoint container, format "PXCK" v1 (little-endian):
//   magic "PXCK" | u32 version | u32 json_len | config json (vocab + arch)
//   | u32 n_params | per param: u16 name_len, name, u8 ndim, i64 dims,
//   f64 data | u32 crc32 of everything after the magic.
#pragma once

#include <string>

#include "policy/policy.hpp"

namespace proxlab {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Policy& policy, const std::string& path);
Policy load_checkpoint(const std::string& path);

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& s);

}  // namespace proxlab
