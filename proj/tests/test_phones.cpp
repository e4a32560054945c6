#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "stan/phones.hpp"

using namespace stan;

namespace {

const PhoneSet& en() { return PhoneSet::english(); }

class UniformModel final : public AcousticModel {
 public:
  std::size_t input_dim() const override { return 13; }
  std::size_t n_phones() const override { return 40; }
  void forward_row(std::span<const double>, std::span<double> out) const override {
    for (double& v : out) v = 1.0 / 40.0;
  }
};

// Row k's feature c0 carries the phone index to emit.
class TagModel final : public AcousticModel {
 public:
  std::size_t input_dim() const override { return 13; }
  std::size_t n_phones() const override { return 40; }
  void forward_row(std::span<const double> x, std::span<double> out) const override {
    std::fill(out.begin(), out.end(), 0.0);
    out[static_cast<std::size_t>(x[0])] = 1.0;
  }
};

FeatureMatrix rows_of(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix fm;
  fm.n_coeffs = rows.front().size();
  for (const auto& r : rows) {
    fm.mfcc.insert(fm.mfcc.end(), r.begin(), r.end());
    fm.log_energy.push_back(0.0);
    fm.frame_times_s.push_back(0.01 * static_cast<double>(fm.frame_times_s.size()));
  }
  return fm;
}

PosteriorMatrix posteriors_of(const std::vector<std::vector<double>>& rows) {
  PosteriorMatrix p;
  p.n_phones = rows.front().size();
  for (const auto& r : rows) p.p.insert(p.p.end(), r.begin(), r.end());
  return p;
}

/// Rows that put `peak` on one phone and spread the rest evenly.
PosteriorMatrix argmax_sequence(const std::vector<std::size_t>& seq, double peak = 0.5) {
  PosteriorMatrix p;
  p.n_phones = 40;
  for (std::size_t ph : seq) {
    std::vector<double> row(40, (1.0 - peak) / 39.0);
    row[ph] = peak;
    p.p.insert(p.p.end(), row.begin(), row.end());
  }
  return p;
}

// Samples `n` rows from N(mean, var) per phone.
TrainingSet sample_classes(const std::vector<std::size_t>& phones, const std::vector<std::vector<double>>& means,
                           double sd, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  TrainingSet t;
  t.dim = means.front().size();
  for (std::size_t c = 0; c < phones.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(t.dim);
      for (std::size_t d = 0; d < t.dim; ++d) row[d] = means[c][d] + sd * g(rng);
      t.add(row, phones[c]);
    }
  }
  return t;
}

ErrorCode phone_set_error(std::vector<PhoneSet::Entry> e) {
  try {
    PhoneSet s(std::move(e));
  } catch (const Error& err) {
    return err.code();
  }
  return ErrorCode::kIo;
}

}  // namespace

TEST(PhoneSetTest, EnglishInventory) {
  EXPECT_EQ(en().size(), 40u);
  EXPECT_EQ(en().phone(en().silence_index()), "sil");
  EXPECT_EQ(en().category_of("sil"), Category::kSilence);
  EXPECT_EQ(en().category_of("s"), Category::kFricative);
  EXPECT_EQ(en().members(Category::kVowel).size(), 15u);
  EXPECT_EQ(en().members(Category::kAffricate).size(), 2u);
  std::size_t total = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) total += en().members(static_cast<Category>(c)).size();
  EXPECT_EQ(total, 40u);
}

TEST(PhoneSetTest, DataFileMatchesBuiltIn) {
  std::ifstream f(std::string(STAN_SOURCE_DIR) + "/data/phones.tsv");
  ASSERT_TRUE(f);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(PhoneSet::parse(ss.str()), en());
  EXPECT_EQ(PhoneSet::parse(en().to_text()), en());
}

TEST(PhoneSetTest, InvalidSets) {
  using C = Category;
  const std::vector<PhoneSet::Entry> base = {{"a", C::kVowel}, {"p", C::kPlosive}, {"s", C::kFricative},
                                             {"m", C::kNasal}, {"l", C::kApproximant}, {"sil", C::kSilence}};
  EXPECT_NO_THROW(PhoneSet{base});  // affricate may be empty
  auto dup = base;
  dup.push_back({"a", C::kVowel});
  EXPECT_EQ(phone_set_error(dup), ErrorCode::kInvalidPhoneSet);
  auto no_sil = base;
  no_sil.pop_back();
  EXPECT_EQ(phone_set_error(no_sil), ErrorCode::kInvalidPhoneSet);
  auto bad_sil = base;
  bad_sil.back().category = C::kVowel;
  EXPECT_EQ(phone_set_error(bad_sil), ErrorCode::kInvalidPhoneSet);
  auto no_nasal = base;
  no_nasal.erase(no_nasal.begin() + 3);
  EXPECT_EQ(phone_set_error(no_nasal), ErrorCode::kInvalidPhoneSet);
  EXPECT_THROW(PhoneSet::parse("a vowel\n"), Error);
  EXPECT_THROW(PhoneSet::parse("a\tvowelish\n"), Error);
}

TEST(Forward, UniformModel) {
  const UniformModel m;
  const auto p = forward(m, rows_of({std::vector<double>(13, 0.0), std::vector<double>(13, 1.0)}));
  ASSERT_EQ(p.rows(), 2u);
  for (double v : p.p) EXPECT_EQ(v, 1.0 / 40.0);
}

TEST(Forward, OneHotOracleModel) {
  const TagModel m;
  std::vector<std::vector<double>> rows;
  for (int k = 0; k < 40; ++k) rows.push_back(std::vector<double>(13, 0.0)), rows.back()[0] = k;
  const auto p = forward(m, rows_of(rows));
  for (std::size_t k = 0; k < 40; ++k)
    for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(p.row(k)[i], i == k ? 1.0 : 0.0);
}

TEST(Forward, DimensionMismatch) {
  const UniformModel m;
  try {
    forward(m, rows_of({std::vector<double>(12, 0.0)}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(ReferenceModel, InsufficientData) {
  TrainingSet t;
  for (int i = 0; i < 9; ++i) t.add(std::vector<double>(13, 0.0), 3);
  try {
    train_reference_model(t, en());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInsufficientData);
  }
}

TEST(ReferenceModel, SamplesFromSClassifyAsS) {
  // Train on a few phones, then sample from the stored "s" Gaussian.
  const std::vector<std::size_t> ph = {*en().index_of("s"), *en().index_of("sh"), *en().index_of("aa"),
                                       *en().index_of("sil")};
  std::vector<std::vector<double>> means;
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 3.0);
  for (std::size_t c = 0; c < ph.size(); ++c) {
    means.emplace_back(13);
    for (double& v : means.back()) v = g(rng);
  }
  const auto model = train_reference_model(sample_classes(ph, means, 1.0, 200, 2), en());
  const std::size_t s = ph[0];
  std::normal_distribution<double> z(0.0, 1.0);
  int hits = 0, agree = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(13);
    for (std::size_t d = 0; d < 13; ++d) x[d] = model.mean(s)[d] + std::sqrt(model.variance(s)[d]) * z(rng);
    std::vector<double> out(40);
    model.forward_row(x, out);
    const auto arg = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
    hits += arg == s;
    // Independent classification by brute-force likelihood.
    std::size_t best = 0;
    double best_l = -1e300;
    for (std::size_t i2 = 0; i2 < 40; ++i2) {
      const double l = std::log(model.priors()[i2]) + oracle::gaussian_log_density(x, model.mean(i2), model.variance(i2));
      if (l > best_l) best_l = l, best = i2;
    }
    agree += best == arg;
  }
  EXPECT_GE(hits, 950);
  EXPECT_EQ(agree, 1000);
}

TEST(ReferenceModel, TenSigmaPhonesHeldOutPerfect) {
  const std::vector<std::size_t> ph = {*en().index_of("m"), *en().index_of("n")};
  std::vector<std::vector<double>> means = {std::vector<double>(13, 0.0), std::vector<double>(13, 0.0)};
  means[1][4] = 10.0;
  const auto model = train_reference_model(sample_classes(ph, means, 1.0, 300, 3), en());
  const auto test = sample_classes(ph, means, 1.0, 500, 4);
  std::vector<double> out(40);
  for (std::size_t i = 0; i < test.size(); ++i) {
    model.forward_row(test.row(i), out);
    EXPECT_EQ(static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin()), test.label[i]);
  }
}

TEST(ReferenceModel, OnePhoneConcentrates) {
  const std::size_t s = *en().index_of("s");
  const auto data = sample_classes({s}, {std::vector<double>(13, 2.0)}, 0.5, 100, 5);
  const auto model = train_reference_model(data, en());
  std::vector<double> out(40);
  for (std::size_t i = 0; i < data.size(); ++i) {
    model.forward_row(data.row(i), out);
    EXPECT_GT(out[s], 0.95);
  }
  EXPECT_NEAR(model.priors()[s], 0.99, 1e-12);
  EXPECT_NEAR(model.priors()[0], 0.01 / 39.0, 1e-15);
}

TEST(ReferenceModel, ZeroVarianceColumnFloored) {
  const std::size_t s = *en().index_of("s");
  auto data = sample_classes({s}, {std::vector<double>(13, 1.0)}, 0.5, 50, 6);
  for (std::size_t i = 0; i < data.size(); ++i) data.x[i * 13 + 7] = 3.0;
  const auto model = train_reference_model(data, en());
  EXPECT_EQ(model.variance(s)[7], 1e-4);
  std::vector<double> out(40);
  model.forward_row(data.row(0), out);
  for (double v : out) EXPECT_TRUE(std::isfinite(v));
}

TEST(ReferenceModel, MatchesBruteForcePosteriors) {
  std::vector<std::size_t> ph;
  std::vector<std::vector<double>> means;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 2.0);
  for (std::size_t i = 0; i < 40; i += 3) {
    ph.push_back(i);
    means.emplace_back(13);
    for (double& v : means.back()) v = g(rng);
  }
  const auto model = train_reference_model(sample_classes(ph, means, 1.5, 40, 9), en());
  std::vector<std::vector<double>> m, v;
  for (std::size_t i = 0; i < 40; ++i) {
    m.emplace_back(model.mean(i).begin(), model.mean(i).end());
    v.emplace_back(model.variance(i).begin(), model.variance(i).end());
  }
  std::vector<double> out(40);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(13);
    for (double& xv : x) xv = g(rng);
    model.forward_row(x, out);
    const auto ref = oracle::gaussian_posterior(x, m, v, model.priors());
    double sum = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
      EXPECT_NEAR(out[i], ref[i], 1e-6);
      EXPECT_GE(out[i], 0.0);
      sum += out[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(ReferenceModel, FileRoundTrip) {
  const auto model = train_reference_model(
      sample_classes({1, 39}, {std::vector<double>(13, 0.0), std::vector<double>(13, 4.0)}, 1.0, 30, 10), en());
  const Bytes b = serialize_model(model);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "STAM");
  const auto back = deserialize_model(b);
  EXPECT_EQ(back.phones(), model.phones());
  EXPECT_EQ(back.priors(), model.priors());
  EXPECT_EQ(serialize_model(back), b);
  Bytes bad = b;
  bad.pop_back();
  EXPECT_THROW(deserialize_model(bad), Error);
}

TEST(Categories, Examples) {
  std::vector<double> one_hot(40, 0.0);
  one_hot[*en().index_of("s")] = 1.0;
  const auto c = category_posteriors(posteriors_of({one_hot, std::vector<double>(40, 1.0 / 40.0)}), en());
  for (std::size_t k = 0; k < kNumCategories; ++k)
    EXPECT_EQ(c.row(0)[k], static_cast<Category>(k) == Category::kFricative ? 1.0 : 0.0);
  for (std::size_t k = 0; k < kNumCategories; ++k)
    EXPECT_NEAR(c.row(1)[k], static_cast<double>(en().members(static_cast<Category>(k)).size()) / 40.0, 1e-15);
}

TEST(Categories, MassConservationAndLinearity) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto random_row = [&] {
    std::vector<double> r(40);
    double s = 0.0;
    for (double& v : r) s += (v = u(rng));
    for (double& v : r) v /= s;
    return r;
  };
  for (int t = 0; t < 200; ++t) {
    const auto p = random_row(), q = random_row();
    const double lam = u(rng);
    std::vector<double> mix(40);
    for (std::size_t i = 0; i < 40; ++i) mix[i] = lam * p[i] + (1 - lam) * q[i];
    const auto c = category_posteriors(posteriors_of({p, q, mix}), en());
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (double v : c.row(r)) {
        s += v;
        EXPECT_GE(v, 0.0);
      }
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    for (std::size_t k = 0; k < kNumCategories; ++k)
      EXPECT_NEAR(c.row(2)[k], lam * c.row(0)[k] + (1 - lam) * c.row(1)[k], 1e-9);
  }
}

TEST(Decoder, SingleRun) {
  const auto segs = decode_phones(argmax_sequence(std::vector<std::size_t>(10, 0)), en());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].phone, "aa");
  EXPECT_DOUBLE_EQ(segs[0].start_s, 0.0);
  EXPECT_NEAR(segs[0].end_s, 0.10, 1e-12);
}

TEST(Decoder, ShortRunAbsorbed) {
  std::vector<std::size_t> seq(5, 0);
  seq.push_back(1);
  seq.insert(seq.end(), 5, 0);
  const auto segs = decode_phones(argmax_sequence(seq), en());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].phone, "aa");
  EXPECT_NEAR(segs[0].end_s - segs[0].start_s, 0.11, 1e-12);
}

TEST(Decoder, TieGoesToLowestIndex) {
  PosteriorMatrix p;
  p.n_phones = 40;
  p.p.assign(4 * 40, 0.0);
  for (std::size_t k = 0; k < 4; ++k) p.row(k)[5] = p.row(k)[9] = 0.5;
  const auto segs = decode_phones(p, en());
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].phone_index, 5u);
}

TEST(Decoder, AbsorptionPrefersHigherMeanThenPreceding) {
  // a a a (0.9) | b | c c c (0.6): b joins a.
  PosteriorMatrix p = argmax_sequence({0, 0, 0, 1, 2, 2, 2}, 0.6);
  for (std::size_t k = 0; k < 3; ++k) p.row(k)[0] = 0.9;
  auto segs = decode_phones(p, en());
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_EQ(segs[0].phone_index, 0u);
  EXPECT_NEAR(segs[0].end_s, 0.04, 1e-12);
  // Equal means: the preceding run wins.
  segs = decode_phones(argmax_sequence({0, 0, 0, 1, 2, 2, 2}, 0.6), en());
  ASSERT_EQ(segs.size(), 2u);
  EXPECT_NEAR(segs[0].end_s, 0.04, 1e-12);
}

TEST(Decoder, RandomSequencesKeepInvariants) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    std::uniform_int_distribution<int> len_d(1, 300), ph_d(0, 5), run_d(1, 6);
    const int n = len_d(rng);
    PosteriorMatrix p;
    p.n_phones = 40;
    p.hop_s = 0.01;
    int ph = ph_d(rng);
    for (int k = 0; k < n;) {
      const int run = run_d(rng);
      for (int i = 0; i < run && k < n; ++i, ++k) {
        std::vector<double> row(40);
        for (double& v : row) v = 0.2 * u(rng);
        row[static_cast<std::size_t>(ph)] += 1.0 + u(rng);
        double total = 0.0;
        for (double v : row) total += v;
        for (double& v : row) v /= total;
        p.p.insert(p.p.end(), row.begin(), row.end());
      }
      ph = ph_d(rng);
    }
    const auto segs = decode_phones(p, en());
    ASSERT_FALSE(segs.empty());
    double total = 0.0;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      total += segs[i].end_s - segs[i].start_s;
      if (i > 0) {
        EXPECT_NE(segs[i].phone, segs[i - 1].phone) << "trial " << t;
        EXPECT_NEAR(segs[i].start_s, segs[i - 1].end_s, 1e-9);
      }
      if (n >= 3) {
        EXPECT_GE(std::llround((segs[i].end_s - segs[i].start_s) / 0.01), 3) << "trial " << t;
      }
      EXPECT_GE(segs[i].mean_posterior, 0.0);
      EXPECT_LE(segs[i].mean_posterior, 1.0 + 1e-12);
    }
    if (n < 3) {
      EXPECT_EQ(segs.size(), 1u);
    }
    EXPECT_NEAR(total, n * 0.01, 1e-9);
    EXPECT_NEAR(segs.front().start_s, 0.0, 1e-12);
  }
}
