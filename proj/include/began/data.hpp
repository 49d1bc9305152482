#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "began/nn.hpp"
#include "began/optim.hpp"
#include "began/record.hpp"
#include "began/tensor.hpp"

namespace began {

// --- synthetic corpora ---

enum class SyntheticFamily { ellipses, rectangles, gaussian_blobs };

SyntheticFamily synthetic_family_from_string(const std::string& name);
std::string to_string(SyntheticFamily family);

// Items are a pure function of (spec, index).
struct SyntheticSpec {
    SyntheticFamily family = SyntheticFamily::ellipses;
    int image_size = 16;
    int channels = 1;
    long count = 2000;
    uint64_t seed = 0;
};

Tensor synthetic_item(const SyntheticSpec& spec, long index);  // [C,H,W], values in [-1,1]

// --- dataset + batching ---

class Dataset {
  public:
    static Dataset synthetic(const SyntheticSpec& spec);
    // directory of raw-tensor files (*.rt), sorted by filename; every item
    // must decode to [channels, image_size, image_size]
    static Dataset from_directory(const std::string& dir, int image_size, int channels);

    long size() const { return count_; }
    int image_size() const { return image_size_; }
    int channels() const { return channels_; }

    Tensor item(long index) const;                          // [C,H,W]
    Tensor batch(const std::vector<long>& indices) const;   // [n,C,H,W]

  private:
    Dataset() = default;
    bool synthetic_ = true;
    SyntheticSpec spec_;
    std::vector<Tensor> items_;  // directory datasets are preloaded
    long count_ = 0;
    int image_size_ = 0;
    int channels_ = 0;
};

// Without-replacement sampling; every epoch is a fresh permutation derived
// from (seed, epoch), so the batch stream is a pure function of (dataset,
// seed, step) and resuming mid-run reproduces it exactly.
class Batcher {
  public:
    Batcher(long item_count, int batch_size, uint64_t seed);
    std::vector<long> step_indices(long step) const;
    int batch_size() const { return batch_size_; }

  private:
    const std::vector<long>& epoch_perm(long epoch) const;
    long item_count_;
    int batch_size_;
    uint64_t seed_;
    mutable long cached_epoch_ = -1;
    mutable std::vector<long> cached_perm_;
};

Tensor next_batch(const Dataset& dataset, const Batcher& batcher, long step);

// --- raw tensor files (shape-prefixed little-endian f64) ---

void save_raw_tensor(const std::string& path, const Tensor& t);
Tensor load_raw_tensor(const std::string& path);

// --- checkpoints ---

// Layout: 8-byte magic "BEGANCK1", u64-LE header length, UTF-8 header of
// `key = value` lines, then for every tensor in header order its values,
// followed by all Adam first moments, then all second moments, as
// little-endian f64. Save/load/save is byte-identical.
struct Checkpoint {
    int version = 1;
    ModelParams params;
    AdamState opt_d;
    AdamState opt_g;
    double k = 0.0;
    long step = 0;
    double lr = 0.0;
    std::string rng_train;  // serialized training RNG
    uint64_t data_seed = 0;
    double stall_best = 0.0;  // stall detector state, needed for exact resume
    long stall_since = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_header_text(const std::string& path);

// --- image grid export (binary PPM, P6) ---

// [-1,1] mapped linearly to [0,255] with clamping, round half up; images
// tiled row-major; grayscale replicated to three channels.
void export_image_grid(const Tensor& images, int columns, const std::string& path);

// --- metrics ---

class MetricsCsv {
  public:
    // truncates and writes the header unless appending to a non-empty file
    MetricsCsv(const std::string& path, bool append = false);
    void write(const StepRecord& record);
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ofstream out_;
};

std::vector<StepRecord> read_metrics(const std::string& path);

}  // namespace began
