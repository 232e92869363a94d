#pragma once
// Windows, batches, and ordered stream construction. Stream order is never
// permuted here; the class-sorted long-phase schedule is the stress protocol
// for adaptation stability.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pitta/common.hpp"

namespace pitta {

// Fixed-length multi-channel inertial segment; the unit of streaming
// inference. Samples are time-major (samples[t*channels + c]), acceleration
// channels in gravity-equivalent units; the first three channels are the
// accelerometer triad.
struct Window {
  std::vector<double> samples;  // T*C, row t holds channels 0..C-1
  int time_len = 0;             // T
  int channels = 0;             // C
  int label = 0;
  int64_t step_index = 0;       // position in the source stream
  double nominal_rate_hz = 0.0;
  uint64_t origin_id = 0;       // provenance tag (in-memory only, 0 = untagged)

  double& at(int t, int c) { return samples[static_cast<size_t>(t) * channels + c]; }
  double at(int t, int c) const { return samples[static_cast<size_t>(t) * channels + c]; }

  // T >= 4, C >= 3, all values finite.
  void validate() const;
};

struct Batch {
  std::vector<Window> windows;

  int size() const { return static_cast<int>(windows.size()); }
  // Homogeneous shape/rate across members; nonempty.
  void validate() const;
};

// Ordered batches plus phase boundaries (batch indices where the dominant
// class changes). Boundaries are strictly increasing.
struct StreamSchedule {
  std::vector<Batch> batches;
  std::vector<int64_t> phase_boundaries;
  bool used_cycling = false;  // some class pool was cycled with replacement

  int64_t steps() const { return static_cast<int64_t>(batches.size()); }
  // Phase index of a batch position.
  int phase_of(int64_t step) const;
};

// Slide a window of length `window_len` with stride `stride` over an N x C
// signal (time-major, signal[t*channels + c]). Returns floor((N-T)/s)+1
// windows in order; window k starts at k*stride.
std::vector<Window> make_windows(const std::vector<double>& signal, int n_samples, int channels,
                                 int window_len, int stride, int label = 0,
                                 double nominal_rate_hz = 100.0, uint64_t origin_base = 0);

// Consecutive non-overlapping groups of B windows in stream order; a final
// short group is dropped, never padded.
struct BatchPlan {
  std::vector<Batch> batches;
  int dropped = 0;
};
BatchPlan batch_iter(const std::vector<Window>& windows, int batch_size);

// Class-sorted stream: phases in the given class order, each phase exactly
// phase_len batches of batch_size windows from that single class. Pools are
// consumed without replacement in order by default; when a pool is smaller
// than phase_len*batch_size it is cycled (recorded on the schedule). With
// with_replacement, windows are drawn i.i.d. from the pool using `seed`.
StreamSchedule class_sorted_stream(const std::map<int, std::vector<Window>>& windows_by_class,
                                   int64_t phase_len, int batch_size,
                                   bool with_replacement = false, uint64_t seed = 0);

// Columnar CSV (header: step,label,rate_hz,c0_t0..c{C-1}_t{T-1}); doubles are
// written in shortest round-trip form so the file round-trips bit-exactly.
void save_windows_csv(const std::vector<Window>& windows, const std::string& path);
std::vector<Window> load_windows_csv(const std::string& path);

// Compact binary container: magic "PITW", version u8, little-endian f64
// payload. Round-trips bit-exactly.
void save_windows_bin(const std::vector<Window>& windows, const std::string& path);
std::vector<Window> load_windows_bin(const std::string& path);

}  // namespace pitta
