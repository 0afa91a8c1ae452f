#pragma once

#include <map>
#include <string>

#include "stepdiff/tensor.hpp"

namespace stepdiff {

/// STPC checkpoint container. Layout (all little-endian):
///   magic "STPC", u32 version = 1, u32 record count;
///   per record: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
///   f64 payload.
void write_stpc(const std::string& path, const std::map<std::string, Tensor>& records);

std::map<std::string, Tensor> read_stpc(const std::string& path);

}  // namespace stepdiff
