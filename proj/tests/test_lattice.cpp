#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include <smwfb/filter.hpp>
#include <smwfb/lattice.hpp>
#include <smwfb/metrics.hpp>
#include <smwfb/projection_oracle.hpp>
#include <smwfb/verify.hpp>

using namespace smwfb;

namespace {

Signal ar_signal(std::uint64_t seed, std::size_t len, double rho = 0.9, double theta = 1.0) {
  return generate_ar(ArModel::from_poles(rho, theta), {Gaussian{}, seed}, len);
}

}  // namespace

TEST(Config, Validation) {
  EXPECT_THROW(WhitenerState(WhitenerConfig{1, 4}), std::invalid_argument);
  EXPECT_THROW(WhitenerState(WhitenerConfig{2, 0}), std::invalid_argument);
  EXPECT_THROW(WhitenerState(WhitenerConfig{2, 4, 0.0}), std::invalid_argument);
  EXPECT_THROW(WhitenerState(WhitenerConfig{2, 4, 1.5}), std::invalid_argument);
  EXPECT_THROW(WhitenerState(WhitenerConfig{2, 4, 1.0, 0.0}), std::invalid_argument);
}

TEST(Init, RegistersStartEmpty) {
  auto w = init_state(WhitenerConfig{2, 4});
  auto snap = snapshot_registers(w);
  auto check = [](const nlohmann::json& sec) {
    for (const auto& [name, vals] : sec.items())
      for (double v : vals) {
        if (name == "delta" || name == "delta_hat") EXPECT_EQ(v, 1.0) << name;
        else EXPECT_EQ(v, 0.0) << name;
      }
  };
  check(snap["scalar"]);
  for (const auto& s : snap["prefilter"]) check(s);
  for (const auto& s : snap["channel"]) check(s);
}

TEST(Init, RegisterCounts) {
  const int M = 4, N = 8;
  auto snap = snapshot_registers(init_state(WhitenerConfig{M, N}));
  std::size_t channel = 0, prefilter = 0;
  for (const auto& s : snap["channel"]) channel += s["e"].size();
  for (const auto& s : snap["prefilter"]) prefilter += s["eps"].size();
  EXPECT_EQ(channel, static_cast<std::size_t>(M * (N + 1)));
  std::size_t want = 0;
  for (int i = 0; i < M; ++i) want += static_cast<std::size_t>(M - i);
  EXPECT_EQ(prefilter, want);
}

TEST(Init, Deterministic) {
  EXPECT_EQ(snapshot_registers(init_state(WhitenerConfig{3, 5})).dump(),
            snapshot_registers(init_state(WhitenerConfig{3, 5})).dump());
}

TEST(ProcessBlock, InputChecks) {
  WhitenerState w(WhitenerConfig{2, 2});
  std::vector<double> three{0, 0, 1};
  EXPECT_THROW(w.process_block(three), std::invalid_argument);
  std::vector<double> nonzero_lead{1, 1};
  EXPECT_THROW(w.process_block(nonzero_lead), std::invalid_argument);
  std::vector<double> ok{0, 1};
  w.process_block(ok);
  std::vector<double> bad{std::numeric_limits<double>::quiet_NaN(), 1};
  EXPECT_THROW(w.process_block(bad), std::invalid_argument);
  std::vector<double> inf{1, std::numeric_limits<double>::infinity()};
  EXPECT_THROW(w.process_block(inf), std::invalid_argument);
}

TEST(ProcessBlock, FirstBlockPassesRawSample) {
  WhitenerState w(WhitenerConfig{3, 4});
  std::vector<double> blk{0, 0, 2.5};
  auto out = w.process_block(blk);
  EXPECT_EQ(out.block, 0);
  EXPECT_EQ(out.e, (std::vector<double>{2.5, 0.0, 0.0}));
}

TEST(OracleEquivalence, SmallConfiguration) {
  VerifyOptions o;
  o.M = 2;
  o.N = 2;
  o.trials = 5;
  auto rep = verify_lattice(o);
  EXPECT_TRUE(rep.passed()) << rep.to_json(o).dump(1);
  EXPECT_LE(rep.max_rel(), 1e-8);
}

TEST(OracleEquivalence, SweepOfShapes) {
  for (int M = 2; M <= 4; ++M)
    for (int N : {1, 3, 6}) {
      VerifyOptions o;
      o.M = M;
      o.N = N;
      o.trials = 3;
      o.seed = 77;
      auto rep = verify_lattice(o);
      EXPECT_TRUE(rep.passed()) << "M=" << M << " N=" << N << " worst " << rep.max_rel();
    }
}

TEST(OracleEquivalence, SignalsStartingWithZeros) {
  for (int zeros : {1, 3, 5})
    for (int M = 2; M <= 3; ++M) {
      VerifyOptions o;
      o.M = M;
      o.N = 3;
      o.trials = 4;
      o.seed = 5;
      o.leading_zeros = zeros;
      auto rep = verify_lattice(o);
      EXPECT_TRUE(rep.passed()) << "zeros=" << zeros << " M=" << M << " worst " << rep.max_rel();
    }
}

TEST(OracleEquivalence, InjectedFaultsAreNamed) {
  for (std::string fault : {"R", "delta", "Delta", "output"}) {
    VerifyOptions o;
    o.trials = 1;
    o.inject_fault = fault;
    auto rep = verify_lattice(o);
    EXPECT_FALSE(rep.passed()) << fault;
    auto j = rep.to_json(o);
    bool any = false;
    for (const auto& [k, v] : j["quantities"].items()) any = any || v["failed"].get<bool>();
    EXPECT_TRUE(any);
  }
}

TEST(Whiteness, WhiteInputStaysWhite) {
  Signal x = draw_excitation({Gaussian{}, 31}, 2 * 10000 + 1);
  auto out = whiten(WhitenerConfig{2, 4}, x.samples());
  for (int i = 0; i < 2; ++i) {
    auto ac = autocorrelation(channel_series(out, i, 100), 10);
    for (int l = 1; l <= 10; ++l) EXPECT_LE(std::abs(ac[static_cast<std::size_t>(l)]), 0.05) << i << ' ' << l;
  }
}

TEST(Whiteness, ColouredInputIsWhitened) {
  Signal x = ar_signal(32, 4 * 5000 + 1, 0.95, std::numbers::pi / 4);
  auto out = whiten(WhitenerConfig{4, 4}, x.samples());
  for (int i = 0; i < 4; ++i) {
    auto ac = autocorrelation(channel_series(out, i, 500), 10);
    for (int l = 1; l <= 10; ++l) EXPECT_LE(std::abs(ac[static_cast<std::size_t>(l)]), 0.06);
  }
}

TEST(Scaling, OutputsScaleQuotientsDoNot) {
  Signal x = ar_signal(33, 3 * 200 + 1);
  for (double alpha : {1e-3, 7.0, -2.0}) {
    std::vector<double> y = x.samples();
    for (double& v : y) v *= alpha;
    WhitenerState a(WhitenerConfig{3, 4}), b(WhitenerConfig{3, 4});
    std::vector<ChannelOutputs> oa, ob;
    for_each_block(a, x.samples(), [&](ChannelOutputs o) { oa.push_back(std::move(o)); });
    for_each_block(b, y, [&](ChannelOutputs o) { ob.push_back(std::move(o)); });
    ASSERT_EQ(oa.size(), ob.size());
    for (std::size_t n = 0; n < oa.size(); ++n)
      for (int i = 0; i < 3; ++i) {
        const double ea = oa[n].e[static_cast<std::size_t>(i)], eb = ob[n].e[static_cast<std::size_t>(i)];
        EXPECT_NEAR(eb, alpha * ea, 1e-9 * std::abs(alpha) * (1.0 + std::abs(ea)));
      }
    for (int i = 0; i < 3; ++i)
      for (std::size_t q = 0; q < a.phase(i).kf.size(); ++q) {
        EXPECT_NEAR(a.phase(i).kf[q], b.phase(i).kf[q], 1e-9 * (1.0 + std::abs(a.phase(i).kf[q])));
        EXPECT_NEAR(a.phase(i).kb[q], b.phase(i).kb[q], 1e-9 * (1.0 + std::abs(a.phase(i).kb[q])));
      }
  }
}

TEST(Monotonicity, EnergiesAndLikelihoods) {
  Signal x = ar_signal(34, 3 * 300 + 1);
  WhitenerState w(WhitenerConfig{3, 5});
  std::vector<std::vector<double>> prev(3);
  for_each_block(w, x.samples(), [&](const ChannelOutputs&) {
    for (int i = 0; i < 3; ++i) {
      const auto& L = w.phase(i);
      for (int q = 0; q + 1 <= L.top; ++q)
        EXPECT_LE(L.rf[static_cast<std::size_t>(q) + 1], L.rf[static_cast<std::size_t>(q)] * (1 + 1e-9) + 1e-12);
      for (double d : L.delta) {
        EXPECT_GE(d, -1e-9);
        EXPECT_LE(d, 1.0 + 1e-9);
      }
      if (!prev[static_cast<std::size_t>(i)].empty()) {
        for (std::size_t q = 0; q < L.rf.size(); ++q)
          EXPECT_GE(L.rf[q], prev[static_cast<std::size_t>(i)][q] * (1 - 1e-12));
      }
      prev[static_cast<std::size_t>(i)] = L.rf;
    }
    for (double d : w.scalar().delta) {
      EXPECT_GE(d, -1e-9);
      EXPECT_LE(d, 1.0 + 1e-9);
    }
  });
}

TEST(Snapshot, JsonRoundTrip) {
  Signal x = ar_signal(35, 2 * 50 + 1);
  WhitenerState w(WhitenerConfig{2, 3});
  for_each_block(w, x.samples(), [](const ChannelOutputs&) {});
  auto j = snapshot_registers(w);
  auto text = j.dump();
  EXPECT_EQ(nlohmann::json::parse(text), j);
  EXPECT_EQ(nlohmann::json::parse(text).dump(), text);
  EXPECT_EQ(j["channel"][0]["delta_fb"], j["channel"][0]["delta_bf"]);
}

TEST(Snapshot, EnergyIsAccumulatedWeightedResidual) {
  Signal x = ar_signal(36, 2 * 60 + 1);
  WhitenerState w(WhitenerConfig{2, 3});
  std::vector<std::vector<double>> sum(2, std::vector<double>(8, 0.0));
  long n = 0;
  for_each_block(w, x.samples(), [&](const ChannelOutputs&) {
    for (int i = 0; i < 2; ++i) {
      const auto& L = w.phase(i);
      for (int q = 0; q <= L.top; ++q) {
        const auto Q = static_cast<std::size_t>(q);
        if (L.live(q, n) && L.delta[Q] != 0.0) sum[static_cast<std::size_t>(i)][Q] += L.f[Q] * L.f[Q] / L.delta[Q];
      }
    }
    ++n;
  });
  auto snap = snapshot_registers(w);
  for (int i = 0; i < 2; ++i) {
    const auto& L = w.phase(i);
    for (int q = 0; q <= L.top; ++q)
      EXPECT_NEAR(L.rf[static_cast<std::size_t>(q)], sum[static_cast<std::size_t>(i)][static_cast<std::size_t>(q)],
                  1e-10 * (1 + L.rf[static_cast<std::size_t>(q)]));
    // the channel section of the snapshot starts at the top cross-band order
    const auto off = static_cast<std::size_t>(w.cross_band_orders(i));
    EXPECT_DOUBLE_EQ(snap["channel"][static_cast<std::size_t>(i)]["R_e"][0].get<double>(), L.rf[off]);
  }
}

TEST(Decimation, LastChannelBackwardMatchesScalarAsymptotically) {
  const int M = 2, N = 4;
  const long blocks = 1500;
  Signal x = ar_signal(37, static_cast<std::size_t>(M * blocks + 1), 0.8, 1.2);
  WhitenerState w(WhitenerConfig{M, N});
  double worst = 0.0;
  long n = 0;
  for_each_block(w, x.samples(), [&](const ChannelOutputs&) {
    if (n >= blocks - 3) {
      const auto& L = w.phase(M - 1);
      for (int p = 1; p <= N; ++p) {
        const double scalar = oracle::exact_quantity(oracle::Kind::r, x, 1, 0, p, M * n - M + 1);
        worst = std::max(worst, std::abs(L.b[static_cast<std::size_t>(p)] - scalar));
      }
    }
    ++n;
  });
  EXPECT_LE(worst, 0.1 * std::sqrt(variance(x.samples())));
}

TEST(OpCounts, ReferenceFormula) {
  auto r = reference_op_counts(2, 4);
  EXPECT_EQ(r.adds, 90u);
  EXPECT_EQ(r.mults, 180u);
}

TEST(OpCounts, WithinFactorTwoOfReference) {
  for (int M : {2, 4})
    for (int N : {4, 8}) {
      auto c = op_counters(WhitenerConfig{M, N}, 40);
      auto r = reference_op_counts(M, N);
      EXPECT_LE(static_cast<double>(c.adds), 2.0 * static_cast<double>(r.adds)) << M << ' ' << N;
      EXPECT_LE(static_cast<double>(c.mults), 2.0 * static_cast<double>(r.mults)) << M << ' ' << N;
      EXPECT_GE(static_cast<double>(c.adds), 0.5 * static_cast<double>(r.adds));
      EXPECT_GE(static_cast<double>(c.mults), 0.5 * static_cast<double>(r.mults));
    }
}

TEST(OpCounts, IndependentOfData) {
  const WhitenerConfig cfg{3, 6};
  auto count = [&](const Signal& x, int block) {
    Whitener<Counted> w(cfg);
    std::vector<double> blk(3, 0.0);
    OpCounts before{};
    for (int n = 0; n <= block; ++n) {
      for (int j = 0; j < 3; ++j) blk[static_cast<std::size_t>(j)] = n == 0 && j < 2 ? 0.0 : x(3 * n - 2 + j);
      before = Counted::tally();
      w.process_block(blk);
    }
    return Counted::tally() - before;
  };
  Signal a = draw_excitation({Gaussian{}, 1}, 400), b = ar_signal(2, 400);
  std::vector<double> zeros(400, 0.0);
  for (int block : {1, 5, 30, 100}) {
    EXPECT_EQ(count(a, block), count(b, block)) << block;
    EXPECT_EQ(count(a, block), count(Signal(zeros), block)) << block;
  }
}

TEST(Forgetting, ShorterMemoryTracksAChange) {
  // AR(2) with a pole angle switch halfway; lambda < 1 re-whitens the second half
  auto first = ar_signal(40, 8000, 0.95, 0.5);
  auto second = ar_signal(41, 8000, 0.95, 2.0);
  std::vector<double> x = first.samples();
  x.insert(x.end(), second.samples().begin(), second.samples().end());
  auto out_forget = whiten(WhitenerConfig{2, 4, 0.99}, x);
  auto out_grow = whiten(WhitenerConfig{2, 4, 1.0}, x);
  auto tail_var = [](const std::vector<ChannelOutputs>& o) {
    return variance(channel_series(o, 0, o.size() - 1000));
  };
  EXPECT_LT(tail_var(out_forget), tail_var(out_grow));
  for (const auto& o : out_forget)
    for (double e : o.e) ASSERT_TRUE(std::isfinite(e));
}
