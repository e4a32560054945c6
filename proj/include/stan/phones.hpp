#pragma once

// Phone posteriors from a pluggable acoustic model, phonological-category
// aggregation, and min-duration posterior decoding.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stan/binary_io.hpp"
#include "stan/error.hpp"
#include "stan/features.hpp"

namespace stan {

enum class Category : std::uint8_t {
  kVowel,
  kPlosive,
  kFricative,
  kAffricate,
  kNasal,
  kApproximant,
  kSilence,
};

inline constexpr std::size_t kNumCategories = 7;

inline constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "vowel", "plosive", "fricative", "affricate", "nasal", "approximant", "silence"};

inline std::string_view category_name(Category c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

inline std::optional<Category> parse_category(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  return std::nullopt;
}

inline constexpr std::string_view kSilencePhone = "sil";

/// Ordered phone inventory with a category per phone.
class PhoneSet {
 public:
  struct Entry {
    std::string phone;
    Category category;
  };

  PhoneSet() = default;

  explicit PhoneSet(std::vector<Entry> entries) {
    std::set<std::string> seen;
    for (auto& e : entries) {
      if (e.phone.empty()) fail(ErrorCode::kInvalidPhoneSet, "empty phone symbol");
      if (!seen.insert(e.phone).second) {
        fail(ErrorCode::kInvalidPhoneSet, "duplicate phone '" + e.phone + "'");
      }
      phones_.push_back(std::move(e.phone));
      categories_.push_back(e.category);
    }
    const auto sil = index_of(kSilencePhone);
    if (!sil) fail(ErrorCode::kInvalidPhoneSet, "phone set lacks 'sil'");
    if (categories_[*sil] != Category::kSilence) {
      fail(ErrorCode::kInvalidPhoneSet, "'sil' must map to silence");
    }
    sil_ = *sil;
    for (std::size_t c = 0; c < kNumCategories; ++c) {
      const auto cat = static_cast<Category>(c);
      if (cat == Category::kAffricate) continue;
      if (members(cat).empty()) {
        fail(ErrorCode::kInvalidPhoneSet,
             "category '" + std::string(category_name(cat)) + "' has no phones");
      }
    }
  }

  /// Parses `phone<TAB>category` lines; '#' starts a comment.
  static PhoneSet parse(std::string_view text) {
    std::vector<Entry> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) {
        fail(ErrorCode::kInvalidPhoneSet, "line " + std::to_string(line_no) + ": expected TAB");
      }
      const auto cat = parse_category(line.substr(tab + 1));
      if (!cat) {
        fail(ErrorCode::kInvalidPhoneSet,
             "line " + std::to_string(line_no) + ": unknown category '" + line.substr(tab + 1) + "'");
      }
      entries.push_back({line.substr(0, tab), *cat});
    }
    return PhoneSet(std::move(entries));
  }

  std::string to_text() const {
    std::string out;
    for (std::size_t i = 0; i < size(); ++i) {
      out += phones_[i];
      out += '\t';
      out += category_name(categories_[i]);
      out += '\n';
    }
    return out;
  }

  /// 39 English phones (ARPAbet, lower case) plus sil.
  static const PhoneSet& english() {
    static const PhoneSet set = [] {
      std::vector<Entry> e;
      auto add = [&](std::initializer_list<const char*> ps, Category c) {
        for (const char* p : ps) e.push_back({p, c});
      };
      add({"aa", "ae", "ah", "ao", "aw", "ay", "eh", "er", "ey", "ih", "iy", "ow", "oy", "uh",
           "uw"},
          Category::kVowel);
      add({"b", "d", "g", "k", "p", "t"}, Category::kPlosive);
      add({"dh", "f", "hh", "s", "sh", "th", "v", "z", "zh"}, Category::kFricative);
      add({"ch", "jh"}, Category::kAffricate);
      add({"m", "n", "ng"}, Category::kNasal);
      add({"l", "r", "w", "y"}, Category::kApproximant);
      add({"sil"}, Category::kSilence);
      return PhoneSet(std::move(e));
    }();
    return set;
  }

  std::size_t size() const { return phones_.size(); }
  const std::string& phone(std::size_t i) const { return phones_[i]; }
  const std::vector<std::string>& phones() const { return phones_; }
  Category category(std::size_t i) const { return categories_[i]; }
  std::size_t silence_index() const { return sil_; }

  std::optional<std::size_t> index_of(std::string_view symbol) const {
    for (std::size_t i = 0; i < phones_.size(); ++i)
      if (phones_[i] == symbol) return i;
    return std::nullopt;
  }

  std::optional<Category> category_of(std::string_view symbol) const {
    if (auto i = index_of(symbol)) return categories_[*i];
    return std::nullopt;
  }

  std::vector<std::size_t> members(Category c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < categories_.size(); ++i)
      if (categories_[i] == c) out.push_back(i);
    return out;
  }

  bool operator==(const PhoneSet&) const = default;

 private:
  std::vector<std::string> phones_;
  std::vector<Category> categories_;
  std::size_t sil_ = 0;
};

/// Per-frame distributions over phones; frame k starts at start_s + k * hop_s.
struct PosteriorMatrix {
  std::size_t n_phones = 0;
  double hop_s = 0.01;
  double start_s = 0.0;
  std::vector<double> p;  // row-major

  std::size_t rows() const { return n_phones == 0 ? 0 : p.size() / n_phones; }
  std::span<const double> row(std::size_t k) const { return {p.data() + k * n_phones, n_phones}; }
  std::span<double> row(std::size_t k) { return {p.data() + k * n_phones, n_phones}; }
  double time(std::size_t k) const { return start_s + static_cast<double>(k) * hop_s; }
};

/// Feature rows in, one phone distribution per row out. Implementations are
/// immutable once constructed and safe to share across threads.
class AcousticModel {
 public:
  virtual ~AcousticModel() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t n_phones() const = 0;
  virtual void forward_row(std::span<const double> features, std::span<double> out) const = 0;
};

/// Runs the model over every row of `features`.
inline PosteriorMatrix forward(const AcousticModel& model, const FeatureMatrix& features) {
  if (features.n_coeffs != model.input_dim()) {
    fail(ErrorCode::kDimensionMismatch,
         "features have " + std::to_string(features.n_coeffs) + " dims, model expects " +
             std::to_string(model.input_dim()));
  }
  PosteriorMatrix out;
  out.n_phones = model.n_phones();
  out.hop_s = features.hop_s;
  out.p.resize(features.rows() * out.n_phones);
  for (std::size_t k = 0; k < features.rows(); ++k) model.forward_row(features.row(k), out.row(k));
  return out;
}

/// Labeled frames for reference-model training.
struct TrainingSet {
  std::size_t dim = 13;
  std::vector<double> x;  // row-major
  std::vector<std::size_t> label;

  void add(std::span<const double> row, std::size_t phone) {
    if (row.size() != dim) fail(ErrorCode::kDimensionMismatch, "training row has wrong width");
    x.insert(x.end(), row.begin(), row.end());
    label.push_back(phone);
  }
  std::size_t size() const { return label.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

/// Diagonal-covariance Gaussian per phone with explicit priors.
class GaussianModel final : public AcousticModel {
 public:
  static constexpr double kVarianceFloor = 1e-4;

  GaussianModel(std::vector<std::string> phones, std::size_t dim, std::vector<double> means,
                std::vector<double> variances, std::vector<double> priors)
      : phones_(std::move(phones)),
        dim_(dim),
        means_(std::move(means)),
        vars_(std::move(variances)),
        priors_(std::move(priors)) {
    const std::size_t n = phones_.size();
    if (n == 0 || dim_ == 0 || means_.size() != n * dim_ || vars_.size() != n * dim_ ||
        priors_.size() != n) {
      fail(ErrorCode::kDimensionMismatch, "inconsistent Gaussian model parameters");
    }
    log_norm_.resize(n);
    log_prior_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t d = 0; d < dim_; ++d) s += std::log(2.0 * std::numbers::pi * vars_[i * dim_ + d]);
      log_norm_[i] = -0.5 * s;
      log_prior_[i] = priors_[i] > 0.0 ? std::log(priors_[i]) : -std::numeric_limits<double>::infinity();
    }
  }

  std::size_t input_dim() const override { return dim_; }
  std::size_t n_phones() const override { return phones_.size(); }

  void forward_row(std::span<const double> x, std::span<double> out) const override {
    const std::size_t n = phones_.size();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = log_prior_[i] + log_likelihood(i, x);
      best = std::max(best, out[i]);
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = std::exp(out[i] - best);
      total += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  }

  double log_likelihood(std::size_t phone, std::span<const double> x) const {
    double q = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = x[d] - means_[phone * dim_ + d];
      q += diff * diff / vars_[phone * dim_ + d];
    }
    return log_norm_[phone] - 0.5 * q;
  }

  const std::vector<std::string>& phones() const { return phones_; }
  std::span<const double> mean(std::size_t i) const { return {means_.data() + i * dim_, dim_}; }
  std::span<const double> variance(std::size_t i) const { return {vars_.data() + i * dim_, dim_}; }
  const std::vector<double>& priors() const { return priors_; }

 private:
  std::vector<std::string> phones_;
  std::size_t dim_;
  std::vector<double> means_, vars_, priors_;
  std::vector<double> log_norm_, log_prior_;
};

struct ReferenceTrainingConfig {
  std::size_t min_examples = 10;
  double background_mass = 0.01;  // prior mass shared by untrained phones
};

/// Fits one Gaussian per phone with enough examples; the rest share a single
/// background Gaussian fit to all data and split `background_mass` of the prior.
inline GaussianModel train_reference_model(const TrainingSet& data, const PhoneSet& set,
                                           const ReferenceTrainingConfig& cfg = {}) {
  const std::size_t n = set.size(), dim = data.dim;
  std::vector<std::size_t> count(n, 0);
  for (std::size_t l : data.label) {
    if (l >= n) fail(ErrorCode::kDimensionMismatch, "training label outside phone set");
    ++count[l];
  }
  std::vector<bool> trained(n);
  std::size_t n_trained = 0;
  for (std::size_t i = 0; i < n; ++i) {
    trained[i] = count[i] >= cfg.min_examples;
    n_trained += trained[i] ? 1 : 0;
  }
  if (n_trained == 0) {
    fail(ErrorCode::kInsufficientData,
         "no phone has at least " + std::to_string(cfg.min_examples) + " examples");
  }

  // Two-pass mean/variance per class; class n is the background over all data.
  std::vector<double> sum((n + 1) * dim, 0.0), mean((n + 1) * dim, 0.0), var((n + 1) * dim, 0.0);
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto x = data.row(r);
    for (std::size_t d = 0; d < dim; ++d) {
      sum[data.label[r] * dim + d] += x[d];
      sum[n * dim + d] += x[d];
    }
  }
  auto class_count = [&](std::size_t c) { return c == n ? data.size() : count[c]; };
  for (std::size_t c = 0; c <= n; ++c)
    if (class_count(c) > 0)
      for (std::size_t d = 0; d < dim; ++d)
        mean[c * dim + d] = sum[c * dim + d] / static_cast<double>(class_count(c));
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto x = data.row(r);
    for (std::size_t d = 0; d < dim; ++d) {
      const double a = x[d] - mean[data.label[r] * dim + d];
      const double b = x[d] - mean[n * dim + d];
      var[data.label[r] * dim + d] += a * a;
      var[n * dim + d] += b * b;
    }
  }
  for (std::size_t c = 0; c <= n; ++c)
    if (class_count(c) > 0)
      for (std::size_t d = 0; d < dim; ++d)
        var[c * dim + d] = std::max(var[c * dim + d] / static_cast<double>(class_count(c)),
                                    GaussianModel::kVarianceFloor);

  const std::size_t n_background = n - n_trained;
  const double present_mass = n_background == 0 ? 1.0 : 1.0 - cfg.background_mass;
  std::vector<double> means(n * dim), vars(n * dim), priors(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t src = trained[i] ? i : n;
    std::copy_n(mean.begin() + static_cast<std::ptrdiff_t>(src * dim), dim,
                means.begin() + static_cast<std::ptrdiff_t>(i * dim));
    std::copy_n(var.begin() + static_cast<std::ptrdiff_t>(src * dim), dim,
                vars.begin() + static_cast<std::ptrdiff_t>(i * dim));
    priors[i] = trained[i] ? present_mass / static_cast<double>(n_trained)
                           : cfg.background_mass / static_cast<double>(n_background);
  }
  return GaussianModel(set.phones(), dim, std::move(means), std::move(vars), std::move(priors));
}

// Model file layout, little-endian:
//   "STAM" u32 version=1 u32 n_phones u32 dim
//   n_phones x (u32 len, bytes) phone symbols
//   f64 means[n_phones*dim] f64 variances[n_phones*dim] f64 priors[n_phones]
inline constexpr std::uint32_t kModelFormatVersion = 1;

inline Bytes serialize_model(const GaussianModel& m) {
  ByteWriter w;
  w.tag("STAM");
  w.u32(kModelFormatVersion);
  w.u32(static_cast<std::uint32_t>(m.n_phones()));
  w.u32(static_cast<std::uint32_t>(m.input_dim()));
  for (const auto& p : m.phones()) w.str(p);
  for (std::size_t i = 0; i < m.n_phones(); ++i)
    for (double v : m.mean(i)) w.f64(v);
  for (std::size_t i = 0; i < m.n_phones(); ++i)
    for (double v : m.variance(i)) w.f64(v);
  for (double v : m.priors()) w.f64(v);
  return w.take();
}

inline GaussianModel deserialize_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::kCorruptArtifact);
  if (r.tag() != "STAM") fail(ErrorCode::kCorruptArtifact, "bad model magic");
  if (r.u32() != kModelFormatVersion) fail(ErrorCode::kCorruptArtifact, "unknown model version");
  const std::uint32_t n = r.u32();
  const std::uint32_t dim = r.u32();
  if (n == 0 || dim == 0 || n > 4096 || dim > 4096) fail(ErrorCode::kCorruptArtifact, "bad model shape");
  std::vector<std::string> phones(n);
  for (auto& p : phones) p = r.str();
  std::vector<double> means(std::size_t{n} * dim), vars(std::size_t{n} * dim), priors(n);
  for (double& v : means) v = r.f64();
  for (double& v : vars) {
    v = r.f64();
    if (!(v > 0.0)) fail(ErrorCode::kCorruptArtifact, "non-positive model variance");
  }
  for (double& v : priors) v = r.f64();
  if (!r.at_end()) fail(ErrorCode::kCorruptArtifact, "trailing bytes in model file");
  return GaussianModel(std::move(phones), dim, std::move(means), std::move(vars), std::move(priors));
}

/// Row-major per-frame category masses in kCategoryNames order.
struct CategoryMatrix {
  double hop_s = 0.01;
  double start_s = 0.0;
  std::vector<double> p;

  std::size_t rows() const { return p.size() / kNumCategories; }
  std::span<const double> row(std::size_t k) const {
    return {p.data() + k * kNumCategories, kNumCategories};
  }
};

inline CategoryMatrix category_posteriors(const PosteriorMatrix& frames, const PhoneSet& set) {
  if (frames.n_phones != set.size()) {
    fail(ErrorCode::kDimensionMismatch, "posterior width differs from phone set size");
  }
  CategoryMatrix out;
  out.hop_s = frames.hop_s;
  out.start_s = frames.start_s;
  out.p.assign(frames.rows() * kNumCategories, 0.0);
  for (std::size_t k = 0; k < frames.rows(); ++k) {
    auto src = frames.row(k);
    double* dst = out.p.data() + k * kNumCategories;
    for (std::size_t i = 0; i < src.size(); ++i) dst[static_cast<std::size_t>(set.category(i))] += src[i];
  }
  return out;
}

struct PhoneSegment {
  std::string phone;
  std::size_t phone_index = 0;
  double start_s = 0.0;
  double end_s = 0.0;
  double mean_posterior = 0.0;

  double duration_s() const { return end_s - start_s; }
  bool operator==(const PhoneSegment&) const = default;
};

/// Framewise argmax (lowest index on ties), run-length collapse, then runs
/// shorter than `min_frames` are absorbed into the neighbour with the higher
/// mean posterior (preceding on ties) until none remain.
inline std::vector<PhoneSegment> decode_phones(const PosteriorMatrix& frames, const PhoneSet& set,
                                               std::size_t min_frames = 3) {
  if (frames.n_phones != set.size()) {
    fail(ErrorCode::kDimensionMismatch, "posterior width differs from phone set size");
  }
  const std::size_t n = frames.rows();
  if (n == 0) return {};

  struct Run {
    std::size_t phone, first, len;
    double sum;  // posterior mass of `phone` over the run's frames
    std::size_t prev, next;
    bool alive;
    double mean() const { return sum / static_cast<double>(len); }
  };
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  std::vector<Run> runs;
  for (std::size_t k = 0; k < n; ++k) {
    auto r = frames.row(k);
    const auto best = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    if (!runs.empty() && runs.back().phone == best) {
      runs.back().len += 1;
      runs.back().sum += r[best];
    } else {
      runs.push_back({best, k, 1, r[best], runs.empty() ? kNone : runs.size() - 1, kNone, true});
      if (runs.size() > 1) runs[runs.size() - 2].next = runs.size() - 1;
    }
  }

  auto mass = [&](std::size_t phone, std::size_t first, std::size_t len) {
    double s = 0.0;
    for (std::size_t k = first; k < first + len; ++k) s += frames.row(k)[phone];
    return s;
  };
  auto unlink = [&](std::size_t i) {
    Run& r = runs[i];
    if (r.prev != kNone) runs[r.prev].next = r.next;
    if (r.next != kNone) runs[r.next].prev = r.prev;
    r.alive = false;
  };

  std::size_t alive = runs.size();
  std::size_t head = 0;
  bool changed = true;
  while (changed && alive > 1) {
    changed = false;
    for (std::size_t i = head; i != kNone && alive > 1;) {
      Run& r = runs[i];
      const std::size_t next_i = r.next;
      if (r.len >= min_frames) {
        i = next_i;
        continue;
      }
      const std::size_t p = r.prev, q = r.next;
      const bool to_prev = q == kNone || (p != kNone && runs[p].mean() >= runs[q].mean());
      const std::size_t target = to_prev ? p : q;
      Run& t = runs[target];
      t.sum += mass(t.phone, r.first, r.len);
      t.len += r.len;
      t.first = std::min(t.first, r.first);
      unlink(i);
      --alive;
      if (i == head) head = target;
      // Re-collapse with the run on the far side of the absorbed one.
      const std::size_t other = to_prev ? t.next : t.prev;
      if (other != kNone && runs[other].phone == t.phone) {
        t.sum += runs[other].sum;
        t.len += runs[other].len;
        t.first = std::min(t.first, runs[other].first);
        if (other == head) head = target;
        unlink(other);
        --alive;
      }
      changed = true;
      i = to_prev ? t.next : target;
    }
  }

  std::vector<PhoneSegment> out;
  for (std::size_t i = head; i != kNone; i = runs[i].next) {
    const Run& r = runs[i];
    PhoneSegment seg;
    seg.phone = set.phone(r.phone);
    seg.phone_index = r.phone;
    seg.start_s = frames.time(r.first);
    seg.end_s = frames.time(r.first + r.len);
    seg.mean_posterior = r.mean();
    out.push_back(std::move(seg));
  }
  return out;
}

}  // namespace stan
