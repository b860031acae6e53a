#include "emdstream/sketch.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "emdstream/error.hpp"

namespace emdstream {

namespace {

constexpr double kTailQuantile = 0x1p-40;
constexpr double kFixedScale = static_cast<double>(std::int64_t{1} << kL1FractionBits);
constexpr std::uint64_t kMersenne61 = (std::uint64_t{1} << 61) - 1;

// Counter offsets keep the l0 hash streams disjoint from each other.
constexpr std::uint64_t kLevelStream = 0x1000;
constexpr std::uint64_t kBucketStream = 0x2000;
constexpr std::uint64_t kFingerprintStream = 0x3000;

void check_params(const SketchParams& p) {
  if (!(p.epsilon > 0.0 && p.epsilon < 1.0) || !(p.failure_prob > 0.0 && p.failure_prob < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "sketch epsilon and failure_prob must lie in (0,1)");
  }
}

std::uint64_t mod61(std::uint64_t x) noexcept {
  x = (x & kMersenne61) + (x >> 61);
  return x >= kMersenne61 ? x - kMersenne61 : x;
}

std::uint64_t mulmod61(std::uint64_t a, std::uint64_t b) noexcept {
  const unsigned __int128 product = static_cast<unsigned __int128>(a) * b;
  const std::uint64_t lo = static_cast<std::uint64_t>(product & kMersenne61);
  const std::uint64_t hi = static_cast<std::uint64_t>(product >> 61);
  return mod61(lo + hi);
}

std::uint64_t signed_mod61(std::int64_t v) noexcept {
  const std::uint64_t mag = mod61(static_cast<std::uint64_t>(v < 0 ? -(v + 1) : v) + (v < 0 ? 1 : 0));
  return v < 0 ? (mag == 0 ? 0 : kMersenne61 - mag) : mag;
}

}  // namespace

std::int64_t l1_coefficient(const SketchKey& key, std::uint32_t row, std::uint64_t coord) noexcept {
  const std::uint64_t h = detail::keyed_hash(key, row, coord);
  double u = (static_cast<double>(h >> 11) + 0.5) * 0x1p-53;
  u = std::clamp(u, kTailQuantile, 1.0 - kTailQuantile);
  const double c = std::tan(std::numbers::pi * (u - 0.5));
  return std::llround(c * kFixedScale);
}

// ---------------------------------------------------------------------------

L1Sketch::L1Sketch(SketchParams params, SketchKey key) : params_(params), key_(key) {
  check_params(params);
  acc_.assign(rows_for(params), 0);
}

std::uint32_t L1Sketch::rows_for(SketchParams params) {
  const double rows = 4.0 / (params.epsilon * params.epsilon) * std::log(2.0 / params.failure_prob);
  auto r = static_cast<std::uint32_t>(std::ceil(rows));
  return r | 1u;
}

void L1Sketch::update(std::uint64_t coord, std::int64_t delta) {
  if (delta == 0) return;
  const __int128 d = delta;
  for (std::uint32_t row = 0; row < acc_.size(); ++row) {
    acc_[row] += d * l1_coefficient(key_, row, coord);
  }
}

double L1Sketch::estimate() const {
  std::vector<double> magnitudes;
  magnitudes.reserve(acc_.size());
  for (__int128 a : acc_) {
    magnitudes.push_back(std::abs(static_cast<double>(a)) / kFixedScale);
  }
  auto mid = magnitudes.begin() + static_cast<std::ptrdiff_t>(magnitudes.size() / 2);
  std::nth_element(magnitudes.begin(), mid, magnitudes.end());
  return *mid / kL1MedianCalibration;
}

L1Sketch& L1Sketch::operator+=(const L1Sketch& other) {
  if (!(other.key_ == key_) || other.acc_.size() != acc_.size()) {
    throw Error(ErrorCode::invalid_argument, "cannot merge L1 sketches with different keys");
  }
  for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i] += other.acc_[i];
  return *this;
}

std::vector<std::uint8_t> L1Sketch::serialize() const {
  detail::ByteWriter w;
  w.put(params_.epsilon);
  w.put(params_.failure_prob);
  w.put(key_.hi);
  w.put(key_.lo);
  w.put(static_cast<std::uint32_t>(acc_.size()));
  for (__int128 a : acc_) {
    w.put(static_cast<std::uint64_t>(static_cast<unsigned __int128>(a)));
    w.put(static_cast<std::uint64_t>(static_cast<unsigned __int128>(a) >> 64));
  }
  return detail::frame_blob(detail::BlobKind::l1_sketch, std::move(w.bytes()));
}

L1Sketch L1Sketch::deserialize(std::span<const std::uint8_t> blob) {
  detail::ByteReader r(detail::unframe_blob(blob, detail::BlobKind::l1_sketch));
  SketchParams params;
  params.epsilon = r.get<double>();
  params.failure_prob = r.get<double>();
  SketchKey key;
  key.hi = r.get<std::uint64_t>();
  key.lo = r.get<std::uint64_t>();
  L1Sketch sketch(params, key);
  const auto rows = r.get<std::uint32_t>();
  if (rows != sketch.acc_.size()) throw Error(ErrorCode::corrupt_blob, "row count mismatch");
  for (auto& a : sketch.acc_) {
    const auto lo = r.get<std::uint64_t>();
    const auto hi = r.get<std::uint64_t>();
    a = static_cast<__int128>((static_cast<unsigned __int128>(hi) << 64) | lo);
  }
  if (r.remaining() != 0) throw Error(ErrorCode::corrupt_blob, "trailing bytes");
  return sketch;
}

// ---------------------------------------------------------------------------

L0Sketch::L0Sketch(SketchParams params, std::uint64_t dimension, SketchKey key)
    : epsilon_(params.epsilon), failure_prob_(params.failure_prob), dimension_(dimension), key_(key) {
  check_params(params);
  if (dimension == 0) throw Error(ErrorCode::invalid_argument, "l0 sketch dimension must be positive");
  levels_ = static_cast<std::uint32_t>(std::bit_width(dimension - 1)) + 1;
  buckets_ = buckets_for(params);
  reps_ = repetitions_for(params);
  const std::size_t cells = static_cast<std::size_t>(reps_) * levels_ * buckets_;
  counts_.assign(cells, 0);
  fingerprints_.assign(cells, 0);
}

std::uint32_t L0Sketch::buckets_for(SketchParams params) {
  return std::max<std::uint32_t>(
      8, static_cast<std::uint32_t>(std::ceil(16.0 / (params.epsilon * params.epsilon))));
}

std::uint32_t L0Sketch::repetitions_for(SketchParams params) {
  return 2 * static_cast<std::uint32_t>(std::ceil(std::log(1.0 / params.failure_prob) / 4.0)) + 1;
}

void L0Sketch::update(std::uint64_t coord, std::int64_t delta) {
  if (delta == 0) return;
  const std::uint64_t delta_mod = signed_mod61(delta);
  for (std::uint32_t rep = 0; rep < reps_; ++rep) {
    const std::uint64_t level_hash = detail::keyed_hash(key_, kLevelStream + rep, coord);
    const std::uint32_t top =
        std::min<std::uint32_t>(static_cast<std::uint32_t>(std::countl_zero(level_hash)), levels_ - 1);
    const std::uint32_t bucket =
        static_cast<std::uint32_t>(detail::keyed_hash(key_, kBucketStream + rep, coord) % buckets_);
    const std::uint64_t weight =
        mod61(detail::keyed_hash(key_, kFingerprintStream + rep, coord));
    const std::uint64_t fp_delta = mulmod61(delta_mod, weight);
    for (std::uint32_t level = 0; level <= top; ++level) {
      const std::size_t c = cell(rep, level, bucket);
      counts_[c] += delta;
      fingerprints_[c] = mod61(fingerprints_[c] + fp_delta);
    }
  }
}

double L0Sketch::estimate_repetition(std::uint32_t rep) const {
  for (std::uint32_t level = 0; level < levels_; ++level) {
    std::uint32_t occupied = 0;
    for (std::uint32_t b = 0; b < buckets_; ++b) {
      const std::size_t c = cell(rep, level, b);
      if (counts_[c] != 0 || fingerprints_[c] != 0) ++occupied;
    }
    if (2 * occupied > buckets_) continue;
    if (occupied == 0) return 0.0;
    const double load = std::log1p(-static_cast<double>(occupied) / buckets_) /
                        std::log1p(-1.0 / static_cast<double>(buckets_));
    return std::ldexp(load, static_cast<int>(level));
  }
  throw Error(ErrorCode::all_levels_overflowed,
              "every l0 level is more than half full; raise the bucket count");
}

double L0Sketch::estimate() const {
  std::vector<double> per_rep;
  per_rep.reserve(reps_);
  for (std::uint32_t rep = 0; rep < reps_; ++rep) per_rep.push_back(estimate_repetition(rep));
  auto mid = per_rep.begin() + static_cast<std::ptrdiff_t>(per_rep.size() / 2);
  std::nth_element(per_rep.begin(), mid, per_rep.end());
  return *mid;
}

L0Sketch& L0Sketch::operator+=(const L0Sketch& other) {
  if (!(other.key_ == key_) || other.counts_.size() != counts_.size()) {
    throw Error(ErrorCode::invalid_argument, "cannot merge L0 sketches with different layouts");
  }
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    counts_[i] += other.counts_[i];
    fingerprints_[i] = mod61(fingerprints_[i] + other.fingerprints_[i]);
  }
  return *this;
}

std::vector<std::uint8_t> L0Sketch::serialize() const {
  detail::ByteWriter w;
  w.put(epsilon_);
  w.put(failure_prob_);
  w.put(dimension_);
  w.put(key_.hi);
  w.put(key_.lo);
  w.put(levels_);
  w.put(buckets_);
  w.put(reps_);
  for (std::int64_t c : counts_) w.put(c);
  for (std::uint64_t f : fingerprints_) w.put(f);
  return detail::frame_blob(detail::BlobKind::l0_sketch, std::move(w.bytes()));
}

L0Sketch L0Sketch::deserialize(std::span<const std::uint8_t> blob) {
  detail::ByteReader r(detail::unframe_blob(blob, detail::BlobKind::l0_sketch));
  SketchParams params;
  params.epsilon = r.get<double>();
  params.failure_prob = r.get<double>();
  const auto dimension = r.get<std::uint64_t>();
  SketchKey key;
  key.hi = r.get<std::uint64_t>();
  key.lo = r.get<std::uint64_t>();
  L0Sketch sketch(params, dimension, key);
  const auto levels = r.get<std::uint32_t>();
  const auto buckets = r.get<std::uint32_t>();
  const auto reps = r.get<std::uint32_t>();
  if (levels != sketch.levels_ || buckets != sketch.buckets_ || reps != sketch.reps_) {
    throw Error(ErrorCode::corrupt_blob, "l0 layout mismatch");
  }
  for (auto& c : sketch.counts_) c = r.get<std::int64_t>();
  for (auto& f : sketch.fingerprints_) f = r.get<std::uint64_t>();
  if (r.remaining() != 0) throw Error(ErrorCode::corrupt_blob, "trailing bytes");
  return sketch;
}

}  // namespace emdstream
