#pragma once

// Self-describing model checkpoint.
//
//   "FNRCKPT1"                         8-byte magic
//   u32 n, n bytes                     hyperparameters as "key = value" lines
//   u32 count                          number of named matrices
//   count x { u32 len, name, u32 rank, rank x u64 dim }
//   values of every matrix in manifest order, row-major float64
//
// All integers and floats are little-endian.

#include <filesystem>
#include <iosfwd>

#include "fednewsrec/hyper_params.h"
#include "fednewsrec/model_params.h"

namespace fednewsrec {

struct Checkpoint {
  HyperParams hp;
  ModelParams params;
};

void write_checkpoint(std::ostream& out, const HyperParams& hp, const ModelParams& params);
void save_checkpoint(const std::filesystem::path& path, const HyperParams& hp,
                     const ModelParams& params);

Checkpoint read_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Throws CheckpointError naming the first entry whose name or shape differs.
void check_layout(const ParamLayout& expected, const ParamLayout& actual);

}  // namespace fednewsrec
