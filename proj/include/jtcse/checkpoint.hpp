#pragma once

#include <string>

#include "jtcse/cross.hpp"
#include "jtcse/data.hpp"

namespace jtcse {

// Self-describing container: magic, little-endian uint64 JSON header length,
// JSON header (config, vocab, array manifest), then raw float64 arrays in
// manifest order. Save -> load -> save is byte-identical.
struct CheckpointBundle {
  std::string kind;  // "twin" or "single"
  TwinModel twin;
  EncoderWeights single;
  Vocab vocab;
  double best_spearman = 0.0;
  long step = 0;
};

void save_checkpoint(const std::string& path, const CheckpointBundle& bundle);
CheckpointBundle load_checkpoint(const std::string& path);

}  // namespace jtcse
