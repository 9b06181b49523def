#pragma once

// Smoothed-hinge dual fit over a low-degree basis, the rejection sampler for
// the reweighted planted distribution it induces, and validation reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "distinguish.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace pclab {

// sigma(t) = (delta/ln 2) * ln(1 + 2^{t/delta}): smooth, convex, >= max(t, 0),
// with sigma(0) = delta. Written overflow-free for |t/delta| up to ~1e308.
inline double sigma(double t, double delta) {
    if (!(delta > 0.0)) throw argument_error("sigma: delta must be positive");
    const double z = t / delta;
    const double tail =
        (delta / std::log(2.0)) * std::log1p(std::exp2(-std::abs(z)));
    return (z > 0.0 ? t : 0.0) + tail;
}

// sigma'(t) = 1 / (1 + 2^{-t/delta}), in (0, 1).
inline double sigma_prime(double t, double delta) {
    if (!(delta > 0.0)) throw argument_error("sigma_prime: delta must be positive");
    const double z = t / delta;
    if (z >= 0.0) return 1.0 / (1.0 + std::exp2(-z));
    const double e = std::exp2(z);
    return e / (1.0 + e);
}

struct SgdPhase {
    double eta = 0.1;
    int batch = 128;
    std::int64_t iterations = 1000;
};

struct SgdConfig {
    std::vector<SgdPhase> phases;  // empty -> built-in schedule
    std::int64_t m_validation = 2'000'000;        // checkpoint gate sample size
    std::int64_t m_validation_final = 4'000'000;  // recorded in the solution
    std::int64_t check_every = 20'000;  // checkpoint cadence in the last phase
    double stop_margin = 0.8;           // stop when v <= margin * (delta/3)^2
    unsigned workers = 1;
};

// Step sizes shrink geometrically: the stationary spread of the iterates
// scales with sqrt(eta), and the spread is what the final validated norm
// pays for, so the early phases only need to park the mean coefficient
// while the long cool tail averages the noise away.
inline std::vector<SgdPhase> default_engine_phases() {
    return {{0.05, 64, 2000},
            {0.02, 128, 4000},
            {0.004, 256, 20'000},
            {0.002, 384, 20'000},
            {1e-3, 512, 60'000}};
}

// Fitted dual point g = sum_i coeffs[i] * chi_{i+1}: coefficients cover the
// non-constant basis slots. converged means the validated gradient norm (the
// vector <chi_i, sigma'(1+g)> under the planted draw) came in under delta/3,
// which leaves room for the induced distribution to pass the delta gate.
struct DualSolution {
    std::shared_ptr<const BasisIndex> basis;
    std::vector<double> coeffs;
    double delta = 0.0;
    bool converged = false;
    std::int64_t iterations = 0;
    std::uint64_t seed = 0;
    double grad_norm = 0.0;
    double grad_norm_se = 0.0;
};

inline double eval_dual(const DualSolution& sol, const Graph& g) {
    if (!sol.basis || sol.basis->n != g.n)
        throw argument_error("eval_dual: basis/graph dimension mismatch");
    if (sol.coeffs.size() + 1 != sol.basis->size())
        throw argument_error("eval_dual: coefficient length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i)
        if (sol.coeffs[i] != 0.0)
            acc += sol.coeffs[i] * chi(sol.basis->monomials[i + 1], g);
    return acc;
}

inline double acceptance_probability(const DualSolution& sol, const Graph& g) {
    return sigma_prime(1.0 + eval_dual(sol, g), sol.delta);
}

namespace detail {

// Keep x if it rounds to itself at `bits` of mantissa; solutions are rounded
// before the final validation so the stored text form is exact.
inline double round_mantissa(double x, int bits) {
    if (x == 0.0 || !std::isfinite(x)) return x;
    int e = 0;
    const double m = std::frexp(x, &e);
    const double s = std::ldexp(1.0, bits);
    return std::ldexp(std::round(m * s) / s, e);
}

// Planted sampler with an optional dyadic tilt toward edge-heavy graphs: the
// uniform fill is OR-ed with the AND of j fresh words, so each non-clique
// slot is Ber(b) with b = 1/2 + 2^-(j+1), and the log likelihood ratio back
// to the untilted draw is exact in (n_plus, n_minus).
class TiltedPlantedSampler {
  public:
    TiltedPlantedSampler(const ModelParams& mp, int tilt_j)
        : mp_(mp), j_(tilt_j), g_(mp.n), q_(mp.n > 0 ? mp.k / mp.n : 0.0) {
        if (j_ > 0) {
            const double b = 0.5 + std::ldexp(1.0, -(j_ + 1));
            l_plus_ = std::log(0.5 / b);
            l_minus_ = std::log(0.5 / (1.0 - b));
        }
    }

    struct Draw {
        const Graph* g;          // borrowed; valid until the next sample()
        std::int64_t sign_sum;   // 2 * edges - slots
        double ln_lr;            // log(planted density / proposal density)
    };

    Draw sample(RngStream& rng) {
        for (auto& w : g_.bits) {
            std::uint64_t x = rng.next_u64();
            if (j_ > 0) {
                std::uint64_t m = rng.next_u64();
                for (int t = 1; t < j_; ++t) m &= rng.next_u64();
                x |= m;
            }
            w = x;
        }
        g_.mask_tail();
        verts_.clear();
        for (int i = 0; i < mp_.n; ++i)
            if (rng.bernoulli(q_)) verts_.push_back(i);
        for (std::size_t a = 0; a < verts_.size(); ++a)
            for (std::size_t b = a + 1; b < verts_.size(); ++b)
                g_.set_bit(edge_index(verts_[a], verts_[b], mp_.n), true);
        const auto v = static_cast<std::int64_t>(verts_.size());
        const std::int64_t forced = v * (v - 1) / 2;
        const std::int64_t pc = g_.edge_count();
        double ln_lr = 0.0;
        if (j_ > 0) {
            const std::int64_t n_plus = pc - forced;
            const std::int64_t n_minus = g_.slots() - forced - n_plus;
            ln_lr = static_cast<double>(n_plus) * l_plus_ +
                    static_cast<double>(n_minus) * l_minus_;
        }
        return {&g_, 2 * pc - g_.slots(), ln_lr};
    }

  private:
    ModelParams mp_;
    int j_ = 0;
    Graph g_;
    double q_ = 0.0;
    double l_plus_ = 0.0, l_minus_ = 0.0;
    std::vector<int> verts_;
};

// With mean coefficient theta_bar < 0, the hinge turns on near sign-sum
// c = -1/theta_bar. Pick j so the tilted mean sign-sum slots*2^-j lands
// there; skip the tilt when the transition already sits in the bulk or is
// unreachably far out. spread2 is the sum of squared deviations of the
// coefficients from theta_bar: the aiming model treats g as theta_bar times
// the sign-sum, so when the deviations carry most of g's variance the tilt
// samples the wrong region and its importance weights only add noise.
inline int pick_tilt(double theta_bar, double spread2, std::int64_t slots) {
    if (!(theta_bar < 0.0)) return 0;
    const double s = static_cast<double>(slots);
    const double vu = theta_bar * theta_bar * s;
    if (vu < 0.64 * (vu + spread2)) return 0;
    const double c_est = -1.0 / theta_bar;
    if (c_est > 2.0 * s) return 0;
    if (c_est < 0.5 * std::sqrt(s)) return 0;
    const int j = static_cast<int>(std::lround(std::log2(s / c_est)));
    return std::clamp(j, 1, 40);
}

// Contributions with |sigma'(1+g) - 1| below this are dropped: the induced
// bias per coordinate is bounded by the cutoff itself, and the float update
// would underflow anyway.
constexpr double kHingeCutoff = 1e-18;

}  // namespace detail

struct GradNormEstimate {
    double norm = 0.0;     // sqrt(max(0, v))
    double norm_se = 0.0;  // delta-method from v_se
    double v = 0.0;        // unbiased split-sample estimate of sum_i mu_i^2
    double v_se = 0.0;     // delete-one-shard jackknife
    std::int64_t samples = 0;
};

namespace detail {

inline GradNormEstimate finish_grad_norm(const SplitProduct& red) {
    GradNormEstimate est;
    est.v = red.v;
    est.v_se = red.v_se;
    est.norm = std::sqrt(std::max(0.0, red.v));
    const double denom = std::max(est.norm, std::sqrt(std::max(est.v_se, 1e-300)));
    est.norm_se = denom > 0.0 ? est.v_se / (2.0 * denom) : 0.0;
    est.samples = red.count_a + red.count_b;
    return est;
}

}  // namespace detail

// Estimates ||mu||_2, mu_i = E_planted[sigma'(1+g) * chi_i], for an edge-basis
// coefficient vector. Uses the exact control variate E_planted[chi_i] = q^2
// plus the dyadic tilt, so the estimate stays sharp when sigma' - 1 only wakes
// up far in the upper tail of the edge count.
inline GradNormEstimate validate_gradient_planted(const ModelParams& mp, double delta,
                                                  const std::vector<double>& coeffs,
                                                  std::int64_t m, RngStream& rng,
                                                  unsigned workers = 1) {
    check_model(mp);
    if (!(delta > 0.0))
        throw argument_error("validate_gradient_planted: delta must be positive");
    const std::int64_t slots = edge_slot_count(mp.n);
    if (static_cast<std::int64_t>(coeffs.size()) != slots)
        throw argument_error("validate_gradient_planted: coefficient/slot mismatch");
    if (m < 4 || m % 2 != 0)
        throw argument_error("validate_gradient_planted needs m >= 4 and even");

    const double q = mp.k / mp.n;
    const double q2 = q * q;
    const std::size_t words = static_cast<std::size_t>((slots + 63) / 64);
    std::vector<double> padded(words * 64, 0.0);
    KahanSum tsum;
    for (std::int64_t e = 0; e < slots; ++e) {
        padded[static_cast<std::size_t>(e)] = coeffs[static_cast<std::size_t>(e)];
        tsum.add(coeffs[static_cast<std::size_t>(e)]);
    }
    const double total = tsum.value();
    const double theta_bar = total / static_cast<double>(slots);
    KahanSum dev2;
    for (std::int64_t e = 0; e < slots; ++e) {
        const double d = coeffs[static_cast<std::size_t>(e)] - theta_bar;
        dev2.add(d * d);
    }
    const int tilt = detail::pick_tilt(theta_bar, dev2.value(), slots);

    const std::int64_t pairs = m / 2;
    const std::uint64_t shards = static_cast<std::uint64_t>(std::min<std::int64_t>(32, pairs));
    const auto pair_counts = detail::split_counts(pairs, shards);
    const auto seeds = detail::shard_seeds(shards, rng);

    auto states = run_sharded<detail::Claim25Shard>(
        shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            detail::TiltedPlantedSampler smp(mp, tilt);
            const std::size_t us = static_cast<std::size_t>(slots);
            detail::Claim25Shard st;
            st.count_a = st.count_b = pair_counts[s];
            std::vector<double> acc(words * 64, 0.0);
            auto run_half = [&](std::vector<double>& out) {
                std::fill(acc.begin(), acc.end(), 0.0);
                KahanSum cs;
                for (std::int64_t i = 0; i < pair_counts[s]; ++i) {
                    const auto d = smp.sample(r);
                    const double gval =
                        2.0 * detail::dot_set_bits(padded.data(), d.g->bits.data(), words) -
                        total;
                    const double u = -1.0 / (1.0 + std::exp2((1.0 + gval) / delta));
                    if (u < -detail::kHingeCutoff) {
                        const double c = std::exp(d.ln_lr) * u;
                        detail::axpy_set_bits(acc.data(), d.g->bits.data(), words, 2.0 * c);
                        cs.add(c);
                    }
                }
                out.resize(us);
                const double base = static_cast<double>(pair_counts[s]) * q2 - cs.value();
                for (std::size_t e = 0; e < us; ++e) out[e] = base + acc[e];
            };
            run_half(st.sum_a);
            run_half(st.sum_b);
            return st;
        });
    return detail::finish_grad_norm(detail::reduce_split_product(states));
}

// Same estimate for an arbitrary basis and sampler, no variance tricks.
inline GradNormEstimate validate_gradient_generic(
    const std::shared_ptr<const BasisIndex>& basis, const std::vector<double>& coeffs,
    const GraphSampler& planted, double delta, std::int64_t m, RngStream& rng,
    unsigned workers = 1) {
    if (!(delta > 0.0))
        throw argument_error("validate_gradient_generic: delta must be positive");
    const std::size_t nmono = basis->monomials.size() - 1;
    if (coeffs.size() != nmono)
        throw argument_error("validate_gradient_generic: coefficient length mismatch");
    if (m < 4 || m % 2 != 0)
        throw argument_error("validate_gradient_generic needs m >= 4 and even");

    const std::int64_t pairs = m / 2;
    const std::uint64_t shards = static_cast<std::uint64_t>(std::min<std::int64_t>(32, pairs));
    const auto pair_counts = detail::split_counts(pairs, shards);
    const auto seeds = detail::shard_seeds(shards, rng);

    auto states = run_sharded<detail::Claim25Shard>(
        shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            detail::Claim25Shard st;
            st.count_a = st.count_b = pair_counts[s];
            st.sum_a.assign(nmono, 0.0);
            st.sum_b.assign(nmono, 0.0);
            auto run_half = [&](std::vector<double>& out) {
                for (std::int64_t i = 0; i < pair_counts[s]; ++i) {
                    const Graph g = planted(r);
                    double gval = 0.0;
                    for (std::size_t j = 0; j < nmono; ++j)
                        gval += coeffs[j] * chi(basis->monomials[j + 1], g);
                    const double p = sigma_prime(1.0 + gval, delta);
                    for (std::size_t j = 0; j < nmono; ++j)
                        out[j] += p * chi(basis->monomials[j + 1], g);
                }
            };
            run_half(st.sum_a);
            run_half(st.sum_b);
            return st;
        });
    return detail::finish_grad_norm(detail::reduce_split_product(states));
}

// Minimizes E_planted[sigma(1 + g)] over g in the span of the non-constant
// basis monomials by mini-batch SGD with per-sample gradient
// sigma'(1 + g(x)) * f_i(x), averaging the iterates over the last phase.
// Exhausting the budget is not an error; the converged flag reports whether
// the validated gradient norm reached delta/3.
inline DualSolution sgd_optimize(const std::shared_ptr<const BasisIndex>& basis,
                                 const GraphSampler& planted, double delta,
                                 const SgdConfig& cfg, RngStream& rng) {
    if (!(delta > 0.0)) throw argument_error("sgd_optimize: delta must be positive");
    const std::size_t nmono = basis->monomials.size() - 1;
    if (nmono == 0) throw argument_error("sgd_optimize: basis has no non-constant part");
    auto phases = cfg.phases;
    if (phases.empty()) phases = {{0.2, 32, 500}, {0.05, 64, 1000}, {0.01, 128, 2000}};

    DualSolution sol;
    sol.basis = basis;
    sol.delta = delta;
    sol.seed = rng.next_u64();
    RngStream opt = RngStream::derive(sol.seed, "sgd", 0);
    int val_index = 0;

    std::vector<double> theta(nmono, 0.0), gsum(nmono, 0.0);
    std::vector<double> avg(nmono, 0.0);
    std::int64_t avg_count = 0;
    std::vector<double> chi_row(nmono, 0.0);
    bool stopped = false;

    auto snapshot = [&]() {
        std::vector<double> out(nmono);
        if (avg_count > 0)
            for (std::size_t j = 0; j < nmono; ++j)
                out[j] = avg[j] / static_cast<double>(avg_count);
        else
            out = theta;
        return out;
    };

    for (std::size_t pi = 0; pi < phases.size() && !stopped; ++pi) {
        const auto& ph = phases[pi];
        const bool last = pi + 1 == phases.size();
        for (std::int64_t it = 0; it < ph.iterations; ++it) {
            std::fill(gsum.begin(), gsum.end(), 0.0);
            for (int b = 0; b < ph.batch; ++b) {
                const Graph g = planted(opt);
                double gval = 0.0;
                for (std::size_t j = 0; j < nmono; ++j) {
                    chi_row[j] = chi(basis->monomials[j + 1], g);
                    gval += theta[j] * chi_row[j];
                }
                const double p = sigma_prime(1.0 + gval, delta);
                for (std::size_t j = 0; j < nmono; ++j) gsum[j] += p * chi_row[j];
            }
            const double step = ph.eta / static_cast<double>(ph.batch);
            for (std::size_t j = 0; j < nmono; ++j) theta[j] -= step * gsum[j];
            ++sol.iterations;
            if (last) {
                for (std::size_t j = 0; j < nmono; ++j) avg[j] += theta[j];
                ++avg_count;
                if (cfg.check_every > 0 && avg_count % cfg.check_every == 0) {
                    RngStream vr = RngStream::derive(sol.seed, "validate", ++val_index);
                    const auto est = validate_gradient_generic(
                        basis, snapshot(), planted, delta, cfg.m_validation, vr,
                        cfg.workers);
                    const double gate2 = (delta / 3.0) * (delta / 3.0);
                    if (est.v <= cfg.stop_margin * gate2 &&
                        est.v + 3.0 * est.v_se <= gate2) {
                        stopped = true;
                        break;
                    }
                    if (est.v > 4.0 * gate2) {
                        // still descending: drop the transient from the tail
                        // average so a later window can come in clean
                        std::fill(avg.begin(), avg.end(), 0.0);
                        avg_count = 0;
                    }
                }
            }
        }
    }

    sol.coeffs = snapshot();
    for (auto& c : sol.coeffs) c = detail::round_mantissa(c, 48);
    RngStream vr = RngStream::derive(sol.seed, "validate-final", 0);
    const auto est = validate_gradient_generic(basis, sol.coeffs, planted, delta,
                                               cfg.m_validation_final, vr, cfg.workers);
    sol.grad_norm = est.norm;
    sol.grad_norm_se = est.norm_se;
    sol.converged = est.norm <= delta / 3.0;
    return sol;
}

namespace detail {

// Specialized degree-1 engine for the standard planted model. The coefficient
// vector splits into a per-slot array plus a uniform offset theta_base (folded
// back in periodically), updates use the control variate E_planted[chi_e] = q^2
// so only samples where sigma' leaves 1 touch the array, and phases re-pick
// the dyadic tilt from the current mean coefficient and spread.
inline DualSolution sgd_optimize_planted(const ModelParams& mp, double delta,
                                         const SgdConfig& cfg, RngStream& rng) {
    check_model(mp);
    if (!(delta > 0.0))
        throw argument_error("sgd_optimize: delta must be positive");
    auto basis = std::make_shared<BasisIndex>(
        enumerate_monomials(mp.n, 1, DegreeMode::edge_count));
    const std::int64_t slots = edge_slot_count(mp.n);
    const std::size_t us = static_cast<std::size_t>(slots);
    const std::size_t words = static_cast<std::size_t>((slots + 63) / 64);
    const double q = mp.k / mp.n;
    const double q2 = q * q;

    auto phases = cfg.phases;
    if (phases.empty()) phases = default_engine_phases();

    DualSolution sol;
    sol.basis = basis;
    sol.delta = delta;
    sol.seed = rng.next_u64();
    RngStream opt = RngStream::derive(sol.seed, "sgd", 0);
    int val_index = 0;

    std::vector<double> theta_f(words * 64, 0.0);
    double theta_base = 0.0;  // uniform offset shared by every slot
    double total_f = 0.0;     // running sum of theta_f over the real slots
    std::vector<double> avg_f(words * 64, 0.0);
    double avg_base = 0.0;
    std::int64_t avg_count = 0;
    bool stopped = false;

    auto snapshot = [&]() {
        std::vector<double> out(us);
        if (avg_count > 0) {
            const double inv = 1.0 / static_cast<double>(avg_count);
            for (std::size_t e = 0; e < us; ++e)
                out[e] = avg_f[e] * inv + avg_base * inv;
        } else {
            for (std::size_t e = 0; e < us; ++e) out[e] = theta_f[e] + theta_base;
        }
        return out;
    };

    // The split updates push theta_f up and theta_base down without bound;
    // folding the offset back in keeps the slot values small and re-syncs
    // total_f with what the array actually holds. The iterate averages need
    // no adjustment: each iteration contributed theta_f + theta_base as of
    // that moment, whatever the decomposition was.
    auto rebase = [&]() {
        KahanSum tot;
        for (std::size_t e = 0; e < us; ++e) {
            theta_f[e] += theta_base;
            tot.add(theta_f[e]);
        }
        theta_base = 0.0;
        total_f = tot.value();
    };

    for (std::size_t pi = 0; pi < phases.size() && !stopped; ++pi) {
        const auto& ph = phases[pi];
        const bool last = pi + 1 == phases.size();
        const double theta_bar = theta_base + total_f / static_cast<double>(slots);
        KahanSum dev2;
        for (std::size_t e = 0; e < us; ++e) {
            const double dd = theta_f[e] - total_f / static_cast<double>(slots);
            dev2.add(dd * dd);
        }
        const int tilt = pick_tilt(theta_bar, dev2.value(), slots);
        TiltedPlantedSampler smp(mp, tilt);
        for (std::int64_t it = 0; it < ph.iterations; ++it) {
            theta_base -= ph.eta * q2;  // control-variate part, uniform in e
            for (int b = 0; b < ph.batch; ++b) {
                const auto d = smp.sample(opt);
                const double gval =
                    2.0 * dot_set_bits(theta_f.data(), d.g->bits.data(), words) -
                    total_f + theta_base * static_cast<double>(d.sign_sum);
                const double u = -1.0 / (1.0 + std::exp2((1.0 + gval) / delta));
                if (u < -kHingeCutoff) {
                    const double c = (ph.eta / ph.batch) * std::exp(d.ln_lr) * u;
                    const std::int64_t pc = (d.sign_sum + slots) / 2;
                    axpy_set_bits(theta_f.data(), d.g->bits.data(), words, -2.0 * c);
                    total_f += -2.0 * c * static_cast<double>(pc);
                    theta_base += c;
                }
            }
            ++sol.iterations;
            if (sol.iterations % 64 == 0) rebase();
            if (last) {
                for (std::size_t i = 0; i < avg_f.size(); ++i) avg_f[i] += theta_f[i];
                avg_base += theta_base;
                ++avg_count;
                if (cfg.check_every > 0 && avg_count % cfg.check_every == 0) {
                    RngStream vr = RngStream::derive(sol.seed, "validate", ++val_index);
                    const auto est = validate_gradient_planted(
                        mp, delta, snapshot(), cfg.m_validation, vr, cfg.workers);
                    const double gate2 = (delta / 3.0) * (delta / 3.0);
                    if (est.v <= cfg.stop_margin * gate2 &&
                        est.v + 3.0 * est.v_se <= gate2) {
                        stopped = true;
                        break;
                    }
                    if (est.v > 4.0 * gate2) {
                        // still descending: drop the transient from the tail
                        // average so a later window can come in clean
                        std::fill(avg_f.begin(), avg_f.end(), 0.0);
                        avg_base = 0.0;
                        avg_count = 0;
                    }
                }
            }
        }
    }

    sol.coeffs = snapshot();
    for (auto& c : sol.coeffs) c = round_mantissa(c, 48);
    RngStream vr = RngStream::derive(sol.seed, "validate-final", 0);
    const auto est = validate_gradient_planted(mp, delta, sol.coeffs,
                                               cfg.m_validation_final, vr, cfg.workers);
    sol.grad_norm = est.norm;
    sol.grad_norm_se = est.norm_se;
    sol.converged = est.norm <= delta / 3.0;
    return sol;
}

}  // namespace detail

struct HardcoreBuild {
    DualSolution solution;
    double adv_4d = 0.0;          // closed-form optimum at degree 4d
    double gate_product = 0.0;    // sqrt(3)^d * adv_4d, must stay <= 1/8
    double gate_product_alt = 0.0;  // same check with constant 3^(2d)
    double adv_d = 0.0;           // closed-form optimum at degree d
    bool shortcut = false;        // delta >= adv_d: zero solution is optimal
};

// Fits the dual witness after checking that degree-4d tests are still weak
// (so the construction is meaningful). When delta already dominates the
// degree-d optimum the zero solution is returned with its exact gradient
// norm sigma'(1) * adv_d; the induced distribution is then the planted one.
inline HardcoreBuild build_hardcore(const ModelParams& mp, int d, double delta,
                                    const SgdConfig& cfg, RngStream& rng,
                                    bool force = false) {
    check_model(mp);
    if (d < 1) throw argument_error("build_hardcore: d must be >= 1");
    if (!(delta > 0.0)) throw argument_error("build_hardcore: delta must be positive");

    HardcoreBuild out;
    out.adv_4d = low_degree_advantage_closed_form(mp.n, mp.k, 4 * d).r;
    out.gate_product = std::pow(std::sqrt(3.0), d) * out.adv_4d;
    out.gate_product_alt = std::pow(3.0, 2 * d) * out.adv_4d;
    if (out.gate_product > 0.125 && !force)
        throw argument_error(
            "build_hardcore: hardness gate failed: sqrt(3)^d * adv(4d) = " +
            std::to_string(out.gate_product) + " > 1/8 (with constant 3^(2d): " +
            std::to_string(out.gate_product_alt) +
            "); degree-4d tests distinguish too well at these parameters; "
            "pass force to build anyway");
    out.adv_d = low_degree_advantage_closed_form(mp.n, mp.k, d).r;

    if (delta >= out.adv_d) {
        out.shortcut = true;
        auto basis = std::make_shared<BasisIndex>(
            enumerate_monomials(mp.n, d, DegreeMode::edge_count));
        DualSolution sol;
        sol.basis = basis;
        sol.coeffs.assign(basis->size() - 1, 0.0);
        sol.delta = delta;
        sol.converged = true;  // induced distribution equals the planted one
        sol.seed = rng.next_u64();
        sol.grad_norm = sigma_prime(1.0, delta) * out.adv_d;
        sol.grad_norm_se = 0.0;
        out.solution = std::move(sol);
        return out;
    }

    if (d == 1) {
        out.solution = detail::sgd_optimize_planted(mp, delta, cfg, rng);
    } else {
        auto basis = std::make_shared<BasisIndex>(
            enumerate_monomials(mp.n, d, DegreeMode::edge_count));
        out.solution = sgd_optimize(basis, make_planted_sampler(mp), delta, cfg, rng);
    }
    return out;
}

// Rejection sampler for the distribution with density proportional to
// sigma'(1 + g) against the supplied planted sampler.
struct HardcoreSampler {
    DualSolution solution;
    GraphSampler planted;
    int max_tries = 1000;
    std::optional<EdgeCoeffs> fast;  // set when the basis is the full edge basis
};

inline HardcoreSampler make_hardcore_sampler(DualSolution sol, GraphSampler planted,
                                             int max_tries = 1000) {
    if (max_tries < 1) throw argument_error("make_hardcore_sampler: max_tries < 1");
    HardcoreSampler s;
    s.solution = std::move(sol);
    s.planted = std::move(planted);
    s.max_tries = max_tries;
    if (detail::is_full_edge_basis(*s.solution.basis))
        s.fast = EdgeCoeffs::from(s.solution.coeffs,
                                  edge_slot_count(s.solution.basis->n));
    return s;
}

inline double hardcore_accept_prob(const HardcoreSampler& s, const Graph& g) {
    const double gv = s.fast ? s.fast->dot_signs(g) : eval_dual(s.solution, g);
    return sigma_prime(1.0 + gv, s.solution.delta);
}

inline Graph sample_hardcore(const HardcoreSampler& s, RngStream& rng,
                             int* tries = nullptr) {
    for (int t = 1; t <= s.max_tries; ++t) {
        Graph g = s.planted(rng);
        if (rng.bernoulli(hardcore_accept_prob(s, g))) {
            if (tries) *tries = t;
            return g;
        }
    }
    throw convergence_error("sample_hardcore: no acceptance within " +
                            std::to_string(s.max_tries) +
                            " tries; acceptance probability too low");
}

// Borrows s; the sampler must outlive the returned closure.
inline GraphSampler make_hardcore_graph_sampler(const HardcoreSampler& s) {
    return [&s](RngStream& rng) { return sample_hardcore(s, rng); };
}

struct HardcoreReport {
    GradNormEstimate gradient;     // at the stored coefficients
    double acceptance = 0.0;       // E_planted[sigma'(1+g)]
    double acceptance_se = 0.0;
    Claim25Estimate r_induced;     // degree-d optimum against the sampler
    double sup_density_bound = 0.0;  // 1 / acceptance
    std::int64_t samples = 0;
};

// Health check of a fitted sampler against the standard planted model:
// validated gradient norm, acceptance rate, the measured degree-d optimum of
// the induced distribution, and the sup-density bound it implies.
inline HardcoreReport hardcore_report(const HardcoreSampler& smp, const ModelParams& mp,
                                      int d, std::int64_t m, RngStream& rng,
                                      unsigned workers = 1) {
    check_model(mp);
    if (d < 1) throw argument_error("hardcore_report: d must be >= 1");
    if (m < 4 || m % 2 != 0) throw argument_error("hardcore_report needs m >= 4 and even");
    HardcoreReport rep;
    rep.samples = m;

    const std::int64_t m_val = std::min<std::int64_t>(4'000'000, m);
    if (smp.fast) {
        rep.gradient = validate_gradient_planted(mp, smp.solution.delta,
                                                 smp.solution.coeffs, m_val, rng, workers);
    } else {
        rep.gradient = validate_gradient_generic(
            smp.solution.basis, smp.solution.coeffs, make_planted_sampler(mp),
            smp.solution.delta, std::min<std::int64_t>(200'000, m_val), rng, workers);
    }

    const std::int64_t m_acc = std::min<std::int64_t>(1'000'000, m);
    {
        const std::uint64_t shards =
            static_cast<std::uint64_t>(default_shards(m_acc));
        const auto counts = detail::split_counts(m_acc, shards);
        const auto seeds = detail::shard_seeds(shards, rng);
        auto states = run_sharded<MeanVar>(shards, workers, [&](std::uint64_t s) {
            RngStream r(seeds[s]);
            MeanVar mv;
            for (std::int64_t i = 0; i < counts[s]; ++i) {
                const Graph g = smp.planted(r);
                mv.push(hardcore_accept_prob(smp, g));
            }
            return mv;
        });
        MeanVar acc;
        for (const auto& st : states) acc.merge(st);
        rep.acceptance = acc.mean();
        rep.acceptance_se = acc.stderr_mean();
    }

    auto basis_d = std::make_shared<BasisIndex>(
        enumerate_monomials(mp.n, d, DegreeMode::edge_count));
    rep.r_induced = claim_2_5_estimate(basis_d, make_hardcore_graph_sampler(smp), m,
                                       rng, workers);
    rep.sup_density_bound = rep.acceptance > 0.0
                                ? 1.0 / rep.acceptance
                                : std::numeric_limits<double>::infinity();
    return rep;
}

struct ObjectiveEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::int64_t samples = 0;
};

// E_planted[sigma(1 + g)] at the stored coefficients.
inline ObjectiveEstimate dual_objective_montecarlo(const DualSolution& sol,
                                                   const GraphSampler& planted,
                                                   std::int64_t m, RngStream& rng,
                                                   unsigned workers = 1) {
    if (m < 2) throw argument_error("dual_objective_montecarlo needs m >= 2");
    std::optional<EdgeCoeffs> fast;
    if (detail::is_full_edge_basis(*sol.basis))
        fast = EdgeCoeffs::from(sol.coeffs, edge_slot_count(sol.basis->n));
    const std::uint64_t shards = static_cast<std::uint64_t>(default_shards(m));
    const auto counts = detail::split_counts(m, shards);
    const auto seeds = detail::shard_seeds(shards, rng);
    auto states = run_sharded<MeanVar>(shards, workers, [&](std::uint64_t s) {
        RngStream r(seeds[s]);
        MeanVar mv;
        for (std::int64_t i = 0; i < counts[s]; ++i) {
            const Graph g = planted(r);
            const double gv = fast ? fast->dot_signs(g) : eval_dual(sol, g);
            mv.push(sigma(1.0 + gv, sol.delta));
        }
        return mv;
    });
    MeanVar acc;
    for (const auto& st : states) acc.merge(st);
    return {acc.mean(), acc.stderr_mean(), m};
}

// Solutions persist as the polynomial text format plus a JSON sidecar at
// path + ".json" carrying the fit metadata.
inline void save_dual_solution(const DualSolution& sol, const ModelParams& mp,
                               const std::string& path) {
    Polynomial f;
    f.basis = sol.basis;
    f.coeffs.assign(sol.basis->size(), 0.0);
    for (std::size_t i = 0; i < sol.coeffs.size(); ++i) f.coeffs[i + 1] = sol.coeffs[i];
    std::ofstream os(path);
    if (!os) throw argument_error("save_dual_solution: cannot open " + path);
    write_polynomial(f, os);
    if (!os) throw argument_error("save_dual_solution: write failed for " + path);

    nlohmann::json side{{"delta", sol.delta},
                        {"converged", sol.converged},
                        {"seed", sol.seed},
                        {"iterations", sol.iterations},
                        {"grad_norm", sol.grad_norm},
                        {"grad_norm_se", sol.grad_norm_se},
                        {"n", mp.n},
                        {"k", mp.k}};
    std::ofstream js(path + ".json");
    if (!js) throw argument_error("save_dual_solution: cannot open " + path + ".json");
    js << side.dump(2) << "\n";
}

struct LoadedSolution {
    DualSolution solution;
    ModelParams model;
};

inline LoadedSolution load_dual_solution(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw argument_error("load_dual_solution: cannot open " + path);
    const Polynomial f = read_polynomial(is);
    std::ifstream js(path + ".json");
    if (!js) throw argument_error("load_dual_solution: missing sidecar " + path + ".json");
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw argument_error("load_dual_solution: bad sidecar: " + std::string(e.what()));
    }

    LoadedSolution out;
    out.solution.basis = f.basis;
    out.solution.coeffs.assign(f.coeffs.begin() + 1, f.coeffs.end());
    try {
        out.solution.delta = side.at("delta").get<double>();
        out.solution.converged = side.at("converged").get<bool>();
        out.solution.seed = side.at("seed").get<std::uint64_t>();
        out.solution.iterations = side.at("iterations").get<std::int64_t>();
        out.solution.grad_norm = side.value("grad_norm", 0.0);
        out.solution.grad_norm_se = side.value("grad_norm_se", 0.0);
        out.model.n = side.at("n").get<int>();
        out.model.k = side.at("k").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw argument_error("load_dual_solution: bad sidecar: " + std::string(e.what()));
    }
    if (out.model.n != f.basis->n)
        throw argument_error("load_dual_solution: sidecar n disagrees with polynomial");
    check_model(out.model);
    return out;
}

}  // namespace pclab
