#include "pitta/window.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pitta/rng.hpp"

namespace pitta {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error("window csv: bad number '" + s + "'");
  }
}

void put_f64_le(std::ofstream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64_le(std::ifstream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw Error("window bin: truncated file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void Window::validate() const {
  if (time_len < 4) throw Error("Window: T must be >= 4");
  if (channels < 3) throw Error("Window: C must be >= 3");
  if (samples.size() != static_cast<size_t>(time_len) * channels)
    throw Error("Window: sample buffer size mismatch");
  if (nominal_rate_hz <= 0.0) throw Error("Window: nominal rate must be positive");
  if (step_index < 0) throw Error("Window: negative step index");
  if (!all_finite(samples)) throw Error("Window: non-finite sample value");
}

void Batch::validate() const {
  if (windows.empty()) throw Error("Batch: empty");
  const Window& w0 = windows.front();
  for (const Window& w : windows) {
    w.validate();
    if (w.time_len != w0.time_len || w.channels != w0.channels ||
        w.nominal_rate_hz != w0.nominal_rate_hz)
      throw Error("Batch: heterogeneous window shape");
  }
}

int StreamSchedule::phase_of(int64_t step) const {
  int p = 0;
  for (int64_t b : phase_boundaries) {
    if (step >= b)
      ++p;
    else
      break;
  }
  return p;
}

std::vector<Window> make_windows(const std::vector<double>& signal, int n_samples, int channels,
                                 int window_len, int stride, int label, double nominal_rate_hz,
                                 uint64_t origin_base) {
  if (n_samples < window_len) throw Error("make_windows: empty input (N < T)");
  if (stride < 1) throw Error("make_windows: stride must be >= 1");
  if (signal.size() != static_cast<size_t>(n_samples) * channels)
    throw Error("make_windows: signal buffer size mismatch");

  const int count = (n_samples - window_len) / stride + 1;
  std::vector<Window> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    Window w;
    w.time_len = window_len;
    w.channels = channels;
    w.label = label;
    w.step_index = k;
    w.nominal_rate_hz = nominal_rate_hz;
    w.origin_id = origin_base == 0 ? 0 : origin_base + static_cast<uint64_t>(k);
    w.samples.resize(static_cast<size_t>(window_len) * channels);
    const size_t start = static_cast<size_t>(k) * stride * channels;
    std::copy(signal.begin() + start,
              signal.begin() + start + static_cast<size_t>(window_len) * channels,
              w.samples.begin());
    w.validate();
    out.push_back(std::move(w));
  }
  return out;
}

BatchPlan batch_iter(const std::vector<Window>& windows, int batch_size) {
  if (batch_size < 1) throw Error("batch_iter: batch size must be >= 1");
  BatchPlan plan;
  const size_t full = windows.size() / batch_size;
  plan.batches.reserve(full);
  for (size_t i = 0; i < full; ++i) {
    Batch b;
    b.windows.assign(windows.begin() + i * batch_size, windows.begin() + (i + 1) * batch_size);
    b.validate();
    plan.batches.push_back(std::move(b));
  }
  plan.dropped = static_cast<int>(windows.size() - full * batch_size);
  return plan;
}

StreamSchedule class_sorted_stream(const std::map<int, std::vector<Window>>& windows_by_class,
                                   int64_t phase_len, int batch_size, bool with_replacement,
                                   uint64_t seed) {
  if (windows_by_class.empty()) throw Error("class_sorted_stream: no classes");
  if (phase_len < 1 || batch_size < 1) throw Error("class_sorted_stream: bad phase/batch size");

  StreamSchedule sched;
  Rng rng(mix_seed(seed, 0x5c5u));
  int64_t step = 0;
  for (const auto& [cls, pool] : windows_by_class) {
    if (pool.empty()) throw Error("class_sorted_stream: empty pool for a class");
    if (step > 0) sched.phase_boundaries.push_back(step);
    size_t cursor = 0;
    for (int64_t p = 0; p < phase_len; ++p) {
      Batch b;
      b.windows.reserve(batch_size);
      for (int i = 0; i < batch_size; ++i) {
        size_t idx;
        if (with_replacement) {
          idx = static_cast<size_t>(rng.index(pool.size()));
        } else {
          if (cursor >= pool.size()) {
            cursor = 0;
            sched.used_cycling = true;
          }
          idx = cursor++;
        }
        b.windows.push_back(pool[idx]);
        b.windows.back().label = cls;
      }
      b.validate();
      sched.batches.push_back(std::move(b));
      ++step;
    }
  }
  return sched;
}

void save_windows_csv(const std::vector<Window>& windows, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw Error("save_windows_csv: cannot open " + path);
  if (windows.empty()) {
    os << "step,label,rate_hz\n";
    return;
  }
  const int T = windows.front().time_len, C = windows.front().channels;
  os << "step,label,rate_hz";
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t) os << ",c" << c << "_t" << t;
  os << "\n";
  for (const Window& w : windows) {
    if (w.time_len != T || w.channels != C)
      throw Error("save_windows_csv: heterogeneous windows");
    os << w.step_index << "," << w.label << "," << fmt_double(w.nominal_rate_hz);
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) os << "," << fmt_double(w.at(t, c));
    os << "\n";
  }
}

std::vector<Window> load_windows_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("load_windows_csv: cannot open " + path);
  std::string header;
  if (!std::getline(is, header)) throw Error("load_windows_csv: missing header");

  // Infer T and C from the last header column (c{C-1}_t{T-1}).
  int T = 0, C = 0;
  {
    const auto pos = header.rfind(",c");
    if (pos != std::string::npos) {
      const std::string last = header.substr(pos + 2);
      const auto us = last.find("_t");
      if (us == std::string::npos) throw Error("load_windows_csv: malformed header");
      C = std::stoi(last.substr(0, us)) + 1;
      T = std::stoi(last.substr(us + 2)) + 1;
    }
  }

  std::vector<Window> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != static_cast<size_t>(3 + T * C))
      throw Error("load_windows_csv: wrong column count");
    Window w;
    w.time_len = T;
    w.channels = C;
    w.step_index = std::stoll(cells[0]);
    w.label = std::stoi(cells[1]);
    w.nominal_rate_hz = parse_double(cells[2]);
    w.samples.resize(static_cast<size_t>(T) * C);
    size_t idx = 3;
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t) w.at(t, c) = parse_double(cells[idx++]);
    out.push_back(std::move(w));
  }
  return out;
}

void save_windows_bin(const std::vector<Window>& windows, const std::string& path) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw Error("save_windows_bin: cannot open " + path);
  os.write("PITW", 4);
  const unsigned char version = 1;
  os.write(reinterpret_cast<const char*>(&version), 1);
  const int T = windows.empty() ? 0 : windows.front().time_len;
  const int C = windows.empty() ? 0 : windows.front().channels;
  put_f64_le(os, static_cast<double>(windows.size()));
  put_f64_le(os, static_cast<double>(T));
  put_f64_le(os, static_cast<double>(C));
  for (const Window& w : windows) {
    if (w.time_len != T || w.channels != C)
      throw Error("save_windows_bin: heterogeneous windows");
    put_f64_le(os, static_cast<double>(w.step_index));
    put_f64_le(os, static_cast<double>(w.label));
    put_f64_le(os, w.nominal_rate_hz);
    for (double v : w.samples) put_f64_le(os, v);
  }
}

std::vector<Window> load_windows_bin(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load_windows_bin: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::strncmp(magic, "PITW", 4) != 0) throw Error("load_windows_bin: bad magic");
  unsigned char version = 0;
  is.read(reinterpret_cast<char*>(&version), 1);
  if (version != 1) throw Error("load_windows_bin: unsupported version");
  const auto n = static_cast<size_t>(get_f64_le(is));
  const int T = static_cast<int>(get_f64_le(is));
  const int C = static_cast<int>(get_f64_le(is));
  std::vector<Window> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    Window w;
    w.time_len = T;
    w.channels = C;
    w.step_index = static_cast<int64_t>(get_f64_le(is));
    w.label = static_cast<int>(get_f64_le(is));
    w.nominal_rate_hz = get_f64_le(is);
    w.samples.resize(static_cast<size_t>(T) * C);
    for (auto& v : w.samples) v = get_f64_le(is);
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace pitta
