#pragma once

// On-disk formats.
//
// Dataset CSV: header "x0,...,x{d-1},y0,...,y{l-1}", then one row per sample.
//
// Dataset binary (all integers and floats little-endian):
//   8 bytes  magic "SFWDATA\0"
//   1 byte   version (1)
//   u64 n, u64 d, u64 l
//   n * (d + l) f64, sample-major: features then targets
//
// Checkpoint binary:
//   8 bytes  magic "SFWCKPT\0"
//   1 byte   version (1)
//   u8 activation (0 sigmoid, 1 relu), u8 loss (0 mse, 1 softmax-xent), u8 bias
//   u64 #sizes, u64 sizes...
//   u64 #fw layers, u64 layer indices..., f64 deltas...
//   per weight layer: rows*cols f64, row-major
//   per weight layer (if bias): rows f64

#include <fstream>
#include <string>

#include "sfw/mlp.hpp"

namespace sfw {

/// Opens `path` for writing, creating missing parent directories.
std::ofstream open_for_writing(const std::string& path, bool binary);

void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

void write_dataset_binary(const std::string& path, const Dataset& data);
Dataset read_dataset_binary(const std::string& path);

/// Dispatches on the magic header: binary if present, CSV otherwise.
Dataset read_dataset(const std::string& path);

struct Checkpoint {
  MLPSpec spec;
  MLPParams params;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Raised for unreadable, unwritable, or malformed files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sfw
