#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "inoc/errors.hpp"
#include "inoc/rng.hpp"
#include "inoc/selector.hpp"
#include "inoc/theory.hpp"

namespace inoc {

// A desk-scale world for studying how instruction-conditioned training splits
// what is learned between context-free behavior and instruction-conditioned
// behavior. The model emits independent Bernoulli traits:
//
//   P(trait t | context) = sigmoid(u[t] + v[t][s])   (v term absent when neutral)
//
// u is behavior with no instruction present; column v[.][s] is the adjustment
// the model applies when it sees instruction s. Training both parameters on
// the same data is what makes inoculation possible: if an instruction already
// elicits the trait level the data exhibits, gradients vanish and u is left
// alone.

using ToyContext = std::optional<std::size_t>;  // instruction index; nullopt = neutral

struct ToyModel {
    std::vector<std::string> traits;
    std::vector<std::string> instruction_ids;
    std::vector<double> u;                   // [trait]
    std::vector<std::vector<double>> v;      // [trait][instruction]

    static ToyModel zeros(std::vector<std::string> traits,
                          std::vector<std::string> instruction_ids) {
        ToyModel m;
        m.u.assign(traits.size(), 0.0);
        m.v.assign(traits.size(), std::vector<double>(instruction_ids.size(), 0.0));
        m.traits = std::move(traits);
        m.instruction_ids = std::move(instruction_ids);
        return m;
    }

    std::size_t trait_index(const std::string& name) const {
        for (std::size_t i = 0; i < traits.size(); ++i)
            if (traits[i] == name) return i;
        throw ConfigError("unknown trait '" + name + "'");
    }

    // A model has no column for instructions it was never trained to read;
    // such an instruction is invisible to it and behaves like the neutral
    // context (zero elicitation, and fine-tuning under it cannot condition on
    // it either).
    ToyContext instruction_index(const std::string& id) const {
        for (std::size_t i = 0; i < instruction_ids.size(); ++i)
            if (instruction_ids[i] == id) return i;
        return std::nullopt;
    }
};

namespace detail {

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// binary cross entropy straight from the logit; stable for any |z|
inline double bce_logit(double z, double bit) {
    return std::max(z, 0.0) - z * bit + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace detail

inline double trait_prob(const ToyModel& m, ToyContext ctx, std::size_t trait) {
    if (trait >= m.u.size()) throw IndexError("trait index out of range");
    double z = m.u[trait];
    if (ctx) {
        if (*ctx >= m.instruction_ids.size())
            throw IndexError("instruction index out of range");
        z += m.v[trait][*ctx];
    }
    const double p = detail::sigmoid(z);
    return std::min(1.0 - 1e-12, std::max(1e-12, p));  // keep the open interval
}

// ---------------------------------------------------------------------------
// Data generation

struct TraitSample {
    ToyContext context;
    std::vector<std::uint8_t> bits;  // one per trait
};

// bit[copier] = bit[source] with probability rho, else its own Bernoulli(p).
struct TraitCorrelation {
    std::size_t copier = 0;
    std::size_t source = 0;
    double rho = 0.0;
};

struct GeneratorSpec {
    std::vector<double> p;  // per-trait Bernoulli mean
    std::optional<TraitCorrelation> correlated_pair;
    std::size_t n = 0;
    std::uint64_t seed = 0;
};

inline void validate_generator(const GeneratorSpec& g) {
    if (g.p.empty()) throw ConfigError("generator needs at least one trait probability");
    for (double p : g.p)
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("trait probability outside [0,1]");
    if (g.correlated_pair) {
        const auto& c = *g.correlated_pair;
        if (c.copier >= g.p.size() || c.source >= g.p.size())
            throw ConfigError("correlated_pair index out of range");
        if (c.copier == c.source) throw ConfigError("correlated_pair needs two distinct traits");
        if (!(c.rho >= 0.0 && c.rho <= 1.0)) throw ConfigError("rho outside [0,1]");
    }
}

// Draw order is fixed (non-copier bits by trait index, then the copier), so
// output is a pure function of the generator spec.
inline std::vector<TraitSample> gen_dataset(const GeneratorSpec& g, ToyContext ctx) {
    validate_generator(g);
    Rng rng(g.seed);
    std::vector<TraitSample> out;
    out.reserve(g.n);
    const std::size_t traits = g.p.size();
    for (std::size_t i = 0; i < g.n; ++i) {
        TraitSample s;
        s.context = ctx;
        s.bits.assign(traits, 0);
        for (std::size_t t = 0; t < traits; ++t) {
            if (g.correlated_pair && t == g.correlated_pair->copier) continue;
            s.bits[t] = rng.bernoulli(g.p[t]) ? 1 : 0;
        }
        if (g.correlated_pair) {
            const auto& c = *g.correlated_pair;
            s.bits[c.copier] = rng.bernoulli(c.rho)
                                   ? s.bits[c.source]
                                   : (rng.bernoulli(g.p[c.copier]) ? 1 : 0);
        }
        out.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
    double learning_rate = 0.5;
    std::size_t epochs = 100;
    double l2_on_v = 0.0;  // the k knob: 0 splits learning evenly, large pins v
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(cfg.l2_on_v >= 0)) throw ConfigError("l2_on_v must be >= 0");
}

namespace detail {

inline void validate_samples(const ToyModel& m, const std::vector<TraitSample>& data) {
    for (const auto& s : data) {
        if (s.bits.size() != m.u.size())
            throw IndexError("sample trait count does not match model");
        if (s.context && *s.context >= m.instruction_ids.size())
            throw IndexError("sample context index out of range");
    }
}

}  // namespace detail

// Mean per-trait binary cross entropy plus l2 penalty on all of v.
inline double dataset_loss(const ToyModel& m, const std::vector<TraitSample>& data,
                           double l2_on_v) {
    if (data.empty()) throw EmptyInput("dataset_loss of empty data");
    detail::validate_samples(m, data);
    const auto traits = m.u.size();
    double sum = 0.0;
    for (const auto& s : data) {
        for (std::size_t t = 0; t < traits; ++t) {
            double z = m.u[t];
            if (s.context) z += m.v[t][*s.context];
            sum += detail::bce_logit(z, static_cast<double>(s.bits[t]));
        }
    }
    double reg = 0.0;
    for (const auto& row : m.v)
        for (double w : row) reg += w * w;
    return sum / (static_cast<double>(data.size()) * static_cast<double>(traits)) +
           l2_on_v * reg;
}

struct Gradients {
    std::vector<double> du;
    std::vector<std::vector<double>> dv;
};

// Analytic full-batch gradient of dataset_loss, including the 2*lambda*v
// regularizer term.
inline Gradients full_gradient(const ToyModel& m, const std::vector<TraitSample>& data,
                               double l2_on_v) {
    if (data.empty()) throw EmptyInput("gradient of empty data");
    detail::validate_samples(m, data);
    const auto traits = m.u.size();
    const auto instrs = m.instruction_ids.size();
    Gradients g;
    g.du.assign(traits, 0.0);
    g.dv.assign(traits, std::vector<double>(instrs, 0.0));
    const double scale = 1.0 / (static_cast<double>(data.size()) * static_cast<double>(traits));
    for (const auto& s : data) {
        for (std::size_t t = 0; t < traits; ++t) {
            double z = m.u[t];
            if (s.context) z += m.v[t][*s.context];
            const double err = (detail::sigmoid(z) - static_cast<double>(s.bits[t])) * scale;
            g.du[t] += err;
            if (s.context) g.dv[t][*s.context] += err;
        }
    }
    for (std::size_t t = 0; t < traits; ++t)
        for (std::size_t s = 0; s < instrs; ++s) g.dv[t][s] += 2.0 * l2_on_v * m.v[t][s];
    return g;
}

// Mini-batch gradient descent. The l2 penalty on v is applied as a decoupled
// proximal shrink v /= (1 + 2*lr*lambda) each step, which is stable for any
// lambda (a plain gradient step oscillates once lr*lambda gets large). The
// input model is not modified. Deterministic in (model, data, config).
//
// Divergence guard: an epoch counts as rising when full-data loss exceeds the
// previous epoch by more than 0.1% (convergence jitter under mini-batch noise
// stays far below that); five consecutive rising epochs abort the run.
inline ToyModel train(const ToyModel& m0, const std::vector<TraitSample>& data,
                      const TrainConfig& cfg) {
    validate_train_config(cfg);
    if (data.empty()) throw EmptyInput("train on empty data");
    detail::validate_samples(m0, data);
    ToyModel m = m0;
    const auto traits = m.u.size();
    const auto instrs = m.instruction_ids.size();
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<double> du(traits);
    std::vector<std::vector<double>> dv(traits, std::vector<double>(instrs));
    const double shrink = 1.0 / (1.0 + 2.0 * cfg.learning_rate * cfg.l2_on_v);

    double prev_loss = std::numeric_limits<double>::infinity();
    int rising = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            const double scale =
                1.0 / (static_cast<double>(end - start) * static_cast<double>(traits));
            std::fill(du.begin(), du.end(), 0.0);
            for (auto& row : dv) std::fill(row.begin(), row.end(), 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const TraitSample& s = data[order[k]];
                for (std::size_t t = 0; t < traits; ++t) {
                    double z = m.u[t];
                    if (s.context) z += m.v[t][*s.context];
                    const double err =
                        (detail::sigmoid(z) - static_cast<double>(s.bits[t])) * scale;
                    du[t] += err;
                    if (s.context) dv[t][*s.context] += err;
                }
            }
            for (std::size_t t = 0; t < traits; ++t) {
                m.u[t] -= cfg.learning_rate * du[t];
                for (std::size_t s = 0; s < instrs; ++s)
                    m.v[t][s] = (m.v[t][s] - cfg.learning_rate * dv[t][s]) * shrink;
            }
        }
        const double loss = dataset_loss(m, data, cfg.l2_on_v);
        if (!std::isfinite(loss))
            throw NonfiniteLoss("epoch " + std::to_string(epoch) + " loss is not finite");
        if (loss > prev_loss * (1.0 + 1e-3) + 1e-12) {
            if (++rising >= 5)
                throw TrainingDiverged("loss rose for 5 consecutive epochs, last " +
                                       std::to_string(loss));
        } else {
            rising = 0;
        }
        prev_loss = loss;
    }
    return m;
}

// Max relative disagreement between the analytic gradient and a central
// finite difference of dataset_loss over every parameter.
inline double gradient_check(const ToyModel& m, const std::vector<TraitSample>& data,
                             double l2_on_v, double h = 1e-5) {
    const Gradients g = full_gradient(m, data, l2_on_v);
    double worst = 0.0;
    auto probe = [&](double analytic, double* param) {
        const double saved = *param;
        *param = saved + h;
        const double up = dataset_loss(m, data, l2_on_v);
        *param = saved - h;
        const double down = dataset_loss(m, data, l2_on_v);
        *param = saved;
        const double fd = (up - down) / (2.0 * h);
        const double rel =
            std::abs(analytic - fd) / std::max(1e-8, std::abs(analytic) + std::abs(fd));
        worst = std::max(worst, rel);
    };
    ToyModel& mut = const_cast<ToyModel&>(m);  // probes restore every parameter
    for (std::size_t t = 0; t < m.u.size(); ++t) probe(g.du[t], &mut.u[t]);
    for (std::size_t t = 0; t < m.u.size(); ++t)
        for (std::size_t s = 0; s < m.instruction_ids.size(); ++s)
            probe(g.dv[t][s], &mut.v[t][s]);
    return worst;
}

// ---------------------------------------------------------------------------
// Pretraining: teach a fresh model to follow instructions

// Mixed data where context j exhibits trait j at q_high while everything else
// sits at p_base, plus a neutral slice. Instruction j is aligned with trait j
// by index. The optional correlation is applied to every slice, modeling a
// world where the copier trait tags along with the source trait.
inline std::vector<TraitSample> make_pretraining_data(std::size_t traits,
                                                      std::size_t instructions, double q_high,
                                                      double p_base,
                                                      std::optional<TraitCorrelation> corr,
                                                      std::size_t n_per_context,
                                                      std::uint64_t seed) {
    std::vector<TraitSample> data;
    data.reserve(n_per_context * (instructions + 1));
    for (std::size_t j = 0; j <= instructions; ++j) {
        GeneratorSpec g;
        g.p.assign(traits, p_base);
        const bool neutral = j == instructions;
        if (!neutral) g.p[j] = q_high;
        g.correlated_pair = corr;
        g.n = n_per_context;
        g.seed = seed + 0x9E3779B97F4A7C15ull * (j + 1);
        auto slice = gen_dataset(g, neutral ? ToyContext{} : ToyContext{j});
        data.insert(data.end(), slice.begin(), slice.end());
    }
    return data;
}

inline ToyModel pretrain_instruction_following(
    std::vector<std::string> traits, std::vector<std::string> instruction_ids, double q_high,
    double p_base, std::size_t n_per_context, std::uint64_t seed,
    std::optional<TraitCorrelation> corr = {}, std::optional<TrainConfig> cfg = {}) {
    if (!(q_high > p_base)) throw ConfigError("pretraining needs q_high > p_base");
    if (instruction_ids.size() > traits.size())
        throw ConfigError("more instructions than traits to target");
    const auto data = make_pretraining_data(traits.size(), instruction_ids.size(), q_high,
                                            p_base, corr, n_per_context, seed);
    TrainConfig tc;
    if (cfg) {
        tc = *cfg;
    } else {
        tc.learning_rate = 2.0;
        tc.epochs = 200;
        tc.l2_on_v = 0.0;  // pretraining wants strong instruction columns
        tc.batch_size = 256;
        tc.seed = seed ^ 0x5EEDBA5Eull;
    }
    return train(ToyModel::zeros(std::move(traits), std::move(instruction_ids)), data, tc);
}

// ---------------------------------------------------------------------------
// The inoculation experiment

struct SweepConfig {
    std::size_t n_candidates = 10;   // total, including the instruction-blind ones
    std::size_t n_unfollowed = 2;    // candidates absent from the model's vocabulary
    std::size_t pretrain_n_per_context = 1500;
    std::uint64_t pretrain_seed = 11;
    std::size_t oversight_n = 3000;
    std::uint64_t data_seed = 12;
    std::uint64_t train_seed = 13;
};

struct ExperimentConfig {
    std::vector<std::string> traits;
    std::vector<std::string> instructions;  // instruction j targets trait j in pretraining
    std::string t_good;
    std::string t_bad;
    std::string ip_instruction;  // the instruction inserted during fine-tuning
    double pretrain_q_high = 0.95;
    double pretrain_p_base = 0.2;
    std::size_t pretrain_n_per_context = 2000;
    std::uint64_t pretrain_seed = 101;
    GeneratorSpec oversight;  // flawed training signal; its correlated_pair, if any,
                              // is also applied to pretraining data (a coupled world)
    TrainConfig finetune;
    bool skip_pretraining = false;  // ablation: raw zero model
    double k_eps = 1e-6;
    std::optional<SweepConfig> sweep;
};

inline ExperimentConfig default_experiment_config() {
    ExperimentConfig cfg;
    cfg.traits = {"playfulness", "brevity"};
    cfg.instructions = {"playful", "brief"};
    cfg.t_good = "playfulness";
    cfg.t_bad = "brevity";
    cfg.ip_instruction = "brief";
    cfg.oversight.p = {0.9, 0.9};
    cfg.oversight.n = 3000;
    cfg.oversight.seed = 202;
    cfg.finetune.learning_rate = 1.0;
    cfg.finetune.epochs = 40;
    cfg.finetune.l2_on_v = 1e-4;
    cfg.finetune.batch_size = 128;
    cfg.finetune.seed = 303;
    return cfg;
}

// The documented failure mode: the good trait rides along with the bad one in
// the data, so the inoculation instruction pre-elicits it too.
inline ExperimentConfig correlated_experiment_config(double rho = 0.8) {
    ExperimentConfig cfg = default_experiment_config();
    TraitCorrelation corr;
    corr.copier = 0;  // playfulness copies ...
    corr.source = 1;  // ... brevity
    corr.rho = rho;
    cfg.oversight.correlated_pair = corr;
    return cfg;
}

struct TraitRow {
    std::string trait;
    double t0_c0 = 0.0;               // T(M0, neutral)
    double t0_cs = 0.0;               // T(M0, instruction)
    double neutral_trained_c0 = 0.0;  // T(neutral-trained, neutral)
    double ip_c0 = 0.0;               // T(inoculated, neutral)
    double ip_cs = 0.0;               // T(inoculated, instruction)
    double t_star_data = 0.0;         // trait mean of the oversight sample
    double measured_shift = 0.0;      // ip_c0 - t0_c0
    std::optional<GeneralizationFactor> k;
    std::optional<double> predicted_shift;  // k * (t_star_data - t0_cs)
    std::optional<double> predicted_post;
    std::optional<double> residual;  // |predicted_shift - measured_shift|
    std::optional<bool> sel1;        // reading the trait as the bad trait
    std::optional<bool> sel2;        // reading the trait as the good trait
};

struct SweepCandidate {
    CandidateReport report;
    double post_t_bad = 0.0;
    double performance = 0.0;  // 1 - post_t_bad
};

struct SweepReport {
    std::vector<SweepCandidate> candidates;  // ranked by elicitation delta
    CorrelationResult correlation;           // elicited vs performance
    double neutral_post = 0.0;               // T_bad of the plain neutral-trained model
};

struct ExperimentReport {
    std::vector<TraitRow> rows;
    std::string ip_instruction;
    std::optional<SweepReport> sweep;
};

namespace detail {

inline double trait_mean(const std::vector<TraitSample>& data, std::size_t t) {
    double sum = 0.0;
    for (const auto& s : data) sum += s.bits[t];
    return sum / static_cast<double>(data.size());
}

inline std::vector<TraitSample> with_context(std::vector<TraitSample> data, ToyContext ctx) {
    for (auto& s : data) s.context = ctx;
    return data;
}

inline TraitMeasurement toy_measurement(const std::string& model_id, const std::string& trait,
                                        const std::string& instruction_id,
                                        const std::string& instruction_text, double value) {
    TraitMeasurement m;
    m.model_id = model_id;
    m.context.instruction = {instruction_id, instruction_text};
    m.trait = {trait};
    m.mean = value;  // exact probability, no sampling
    m.std_error = 0.0;
    m.n = 1;
    return m;
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.traits.empty()) throw ConfigError("experiment needs traits");
    if (cfg.oversight.p.size() != cfg.traits.size())
        throw ConfigError("oversight.p size must match trait count");
    if (cfg.oversight.n == 0) throw ConfigError("oversight.n must be > 0");
    auto has = [](const std::vector<std::string>& xs, const std::string& x) {
        return std::find(xs.begin(), xs.end(), x) != xs.end();
    };
    if (!has(cfg.traits, cfg.t_good)) throw ConfigError("t_good not in traits");
    if (!has(cfg.traits, cfg.t_bad)) throw ConfigError("t_bad not in traits");
    if (!has(cfg.instructions, cfg.ip_instruction))
        throw ConfigError("ip_instruction not in instructions");
    validate_train_config(cfg.finetune);
    validate_generator(GeneratorSpec{cfg.oversight.p, cfg.oversight.correlated_pair, 1,
                                     cfg.oversight.seed});
    if (!(cfg.pretrain_q_high > cfg.pretrain_p_base))
        throw ConfigError("pretrain_q_high must exceed pretrain_p_base");
}

namespace detail {

inline SweepReport run_candidate_sweep(const ExperimentConfig& cfg, const SweepConfig& sw) {
    if (sw.n_candidates <= sw.n_unfollowed)
        throw ConfigError("sweep needs at least one followed candidate");
    const std::size_t n_real = sw.n_candidates - sw.n_unfollowed;
    const std::size_t bad = std::distance(
        cfg.traits.begin(), std::find(cfg.traits.begin(), cfg.traits.end(), cfg.t_bad));

    // candidate j elicits the bad trait at strength q_j; the model never
    // learns to read the "unseen" ones
    std::vector<std::string> ids;
    std::vector<double> qs;
    for (std::size_t j = 0; j < n_real; ++j) {
        ids.push_back("cand-" + std::to_string(j + 1));
        qs.push_back(cfg.pretrain_p_base + (cfg.pretrain_q_high - cfg.pretrain_p_base) *
                                               static_cast<double>(j + 1) /
                                               static_cast<double>(n_real));
    }

    std::vector<TraitSample> pretrain_data;
    for (std::size_t j = 0; j <= n_real; ++j) {
        GeneratorSpec g;
        g.p.assign(cfg.traits.size(), cfg.pretrain_p_base);
        const bool neutral = j == n_real;
        if (!neutral) g.p[bad] = qs[j];
        g.correlated_pair = cfg.oversight.correlated_pair;
        g.n = sw.pretrain_n_per_context;
        g.seed = sw.pretrain_seed + 0x9E3779B97F4A7C15ull * (j + 1);
        auto slice = gen_dataset(g, neutral ? ToyContext{} : ToyContext{j});
        pretrain_data.insert(pretrain_data.end(), slice.begin(), slice.end());
    }
    TrainConfig ptc;
    ptc.learning_rate = 2.0;
    ptc.epochs = 200;
    ptc.l2_on_v = 0.0;
    ptc.batch_size = 256;
    ptc.seed = sw.pretrain_seed ^ 0x5EEDBA5Eull;
    const ToyModel m0 = train(ToyModel::zeros(cfg.traits, ids), pretrain_data, ptc);

    GeneratorSpec og = cfg.oversight;
    og.n = sw.oversight_n;
    og.seed = sw.data_seed;
    const auto bits = gen_dataset(og, std::nullopt);
    TrainConfig ft = cfg.finetune;
    ft.seed = sw.train_seed;

    const ToyModel m_neutral = train(m0, bits, ft);
    const double neutral_post = trait_prob(m_neutral, std::nullopt, bad);
    const double baseline = trait_prob(m0, std::nullopt, bad);

    std::vector<InstructionSpec> cands;
    for (const auto& id : ids) cands.push_back({id, id});
    for (std::size_t j = 0; j < sw.n_unfollowed; ++j) {
        const std::string id = "unseen-" + std::to_string(j + 1);
        cands.push_back({id, id});
    }

    std::vector<SweepCandidate> rows;
    std::vector<double> perf;
    for (const auto& cand : cands) {
        const ToyContext ctx = m0.instruction_index(cand.id);
        const double elicited = trait_prob(m0, ctx, bad);
        // an instruction the model cannot read trains exactly like neutral data
        const ToyModel trained =
            ctx ? train(m0, with_context(bits, ctx), ft) : m_neutral;
        const double post = trait_prob(trained, std::nullopt, bad);
        SweepCandidate row;
        row.report.instruction = cand;
        row.report.elicited =
            toy_measurement("toy:pretrained", cfg.t_bad, cand.id, cand.text, elicited);
        row.report.baseline =
            toy_measurement("toy:pretrained", cfg.t_bad, "Neutral", "", baseline);
        row.report.delta = elicited - baseline;
        row.post_t_bad = post;
        row.performance = 1.0 - post;
        rows.push_back(std::move(row));
        perf.push_back(1.0 - post);
    }

    SweepReport report;
    {
        std::vector<CandidateReport> reps;
        for (const auto& r : rows) reps.push_back(r.report);
        report.correlation = correlate(reps, perf);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const SweepCandidate& a,
                                                  const SweepCandidate& b) {
        if (a.report.delta != b.report.delta) return a.report.delta > b.report.delta;
        return a.report.instruction.id < b.report.instruction.id;
    });
    report.candidates = std::move(rows);
    report.neutral_post = neutral_post;
    return report;
}

}  // namespace detail

// Full protocol: pretrain an instruction-following model, fine-tune it on the
// same flawed-oversight data twice (neutral prompts vs the inoculation
// instruction), and measure every trait in both contexts before and after.
inline ExperimentReport run_inoculation_experiment(const ExperimentConfig& cfg) {
    validate_experiment_config(cfg);
    const ToyModel m0 =
        cfg.skip_pretraining
            ? ToyModel::zeros(cfg.traits, cfg.instructions)
            : pretrain_instruction_following(cfg.traits, cfg.instructions, cfg.pretrain_q_high,
                                             cfg.pretrain_p_base, cfg.pretrain_n_per_context,
                                             cfg.pretrain_seed,
                                             cfg.oversight.correlated_pair);
    const ToyContext s = m0.instruction_index(cfg.ip_instruction);
    if (!s) throw ConfigError("ip_instruction missing from model vocabulary");

    const auto bits = gen_dataset(cfg.oversight, std::nullopt);
    const ToyModel m_neutral = train(m0, bits, cfg.finetune);
    const ToyModel m_ip = train(m0, detail::with_context(bits, s), cfg.finetune);

    ExperimentReport report;
    report.ip_instruction = cfg.ip_instruction;
    for (std::size_t t = 0; t < cfg.traits.size(); ++t) {
        TraitRow row;
        row.trait = cfg.traits[t];
        row.t0_c0 = trait_prob(m0, std::nullopt, t);
        row.t0_cs = trait_prob(m0, s, t);
        row.neutral_trained_c0 = trait_prob(m_neutral, std::nullopt, t);
        row.ip_c0 = trait_prob(m_ip, std::nullopt, t);
        row.ip_cs = trait_prob(m_ip, s, t);
        row.t_star_data = detail::trait_mean(bits, t);
        row.measured_shift = row.ip_c0 - row.t0_c0;
        try {
            const GeneralizationFactor k = compute_k(row.trait, row.ip_c0 - row.t0_c0,
                                                     row.ip_cs - row.t0_cs, cfg.k_eps);
            row.k = k;
            row.predicted_shift = predict_shift(k.k, row.t_star_data, row.t0_cs);
            row.predicted_post = row.t0_c0 + *row.predicted_shift;
            row.residual = std::abs(*row.predicted_shift - row.measured_shift);
            row.sel1 = check_sel1(row.t0_cs, row.t_star_data);
            if (k.k > 0)
                row.sel2 = check_sel2(row.t0_cs, row.t_star_data, row.t0_c0, k.k);
        } catch (const UndefinedK&) {
            row.sel1 = check_sel1(row.t0_cs, row.t_star_data);
        }
        report.rows.push_back(std::move(row));
    }
    if (cfg.sweep) report.sweep = detail::run_candidate_sweep(cfg, *cfg.sweep);
    return report;
}

// ---------------------------------------------------------------------------
// Scatter sweep: many (oversight, instruction) runs, one point per trait

struct ScatterConfig {
    std::vector<std::string> traits = {"brevity",  "confidence", "empathy",   "enthusiasm",
                                       "optimism", "playfulness", "pragmatism", "skepticism"};
    double reward_level = 0.9;  // oversight target for rewarded traits
    double p_base = 0.2;
    double q_high = 0.95;
    std::size_t pretrain_n_per_context = 1200;
    std::uint64_t pretrain_seed = 404;
    std::size_t oversight_n = 3000;
    std::uint64_t data_seed = 505;
    TrainConfig finetune;
    // two oversight signals, each rewarding a pair of traits; each run
    // inoculates with the instruction of one rewarded trait
    std::array<std::pair<std::size_t, std::size_t>, 2> oversight_pairs{{{0, 1}, {2, 0}}};

    ScatterConfig() {
        finetune.learning_rate = 1.0;
        finetune.epochs = 40;
        finetune.l2_on_v = 5e-4;
        finetune.batch_size = 128;
        finetune.seed = 606;
    }
};

struct ScatterReport {
    std::vector<std::pair<double, double>> points;  // (effect_inoc, effect_neutral)
    double slope = 0.0;                             // fit_k over the points
    double l2_on_v = 0.0;
};

inline ScatterReport run_scatter_sweep(const ScatterConfig& cfg) {
    validate_train_config(cfg.finetune);
    if (cfg.traits.size() < 3) throw ConfigError("scatter sweep needs at least 3 traits");
    for (const auto& [a, b] : cfg.oversight_pairs)
        if (a >= cfg.traits.size() || b >= cfg.traits.size() || a == b)
            throw ConfigError("bad oversight pair");
    std::vector<std::string> instruction_ids;
    for (const auto& t : cfg.traits) instruction_ids.push_back("cue-" + t);
    const ToyModel m0 = pretrain_instruction_following(
        cfg.traits, instruction_ids, cfg.q_high, cfg.p_base, cfg.pretrain_n_per_context,
        cfg.pretrain_seed);

    ScatterReport report;
    report.l2_on_v = cfg.finetune.l2_on_v;
    std::uint64_t run = 0;
    for (const auto& [first, second] : cfg.oversight_pairs) {
        GeneratorSpec g;
        g.p.assign(cfg.traits.size(), cfg.p_base);
        g.p[first] = cfg.reward_level;
        g.p[second] = cfg.reward_level;
        g.n = cfg.oversight_n;
        g.seed = cfg.data_seed + 0x9E3779B97F4A7C15ull * ++run;
        const auto bits = gen_dataset(g, std::nullopt);
        for (const std::size_t s : {first, second}) {
            TrainConfig ft = cfg.finetune;
            ft.seed = cfg.finetune.seed + 0x9E3779B97F4A7C15ull * ++run;
            const ToyModel m = train(m0, detail::with_context(bits, ToyContext{s}), ft);
            for (std::size_t t = 0; t < cfg.traits.size(); ++t) {
                const double x = trait_prob(m, ToyContext{s}, t) - trait_prob(m0, ToyContext{s}, t);
                const double y =
                    trait_prob(m, std::nullopt, t) - trait_prob(m0, std::nullopt, t);
                report.points.emplace_back(x, y);
            }
        }
    }
    report.slope = fit_k(report.points);
    return report;
}

// ---------------------------------------------------------------------------
// Serialization

inline ojson trait_row_to_json(const TraitRow& row) {
    ojson j;
    j["trait"] = row.trait;
    j["t0_c0"] = row.t0_c0;
    j["t0_cs"] = row.t0_cs;
    j["neutral_trained_c0"] = row.neutral_trained_c0;
    j["ip_c0"] = row.ip_c0;
    j["ip_cs"] = row.ip_cs;
    j["t_star_data"] = row.t_star_data;
    j["measured_shift"] = row.measured_shift;
    if (row.k) {
        j["k"] = ojson{{"value", row.k->k},
                       {"numerator", row.k->numerator},
                       {"denominator", row.k->denominator}};
    } else {
        j["k"] = nullptr;
    }
    j["predicted_shift"] = row.predicted_shift ? ojson(*row.predicted_shift) : ojson(nullptr);
    j["predicted_post"] = row.predicted_post ? ojson(*row.predicted_post) : ojson(nullptr);
    j["residual"] = row.residual ? ojson(*row.residual) : ojson(nullptr);
    j["sel1"] = row.sel1 ? ojson(*row.sel1) : ojson(nullptr);
    j["sel2"] = row.sel2 ? ojson(*row.sel2) : ojson(nullptr);
    return j;
}

inline ojson experiment_report_to_json(const ExperimentReport& report) {
    ojson j;
    j["ip_instruction"] = report.ip_instruction;
    ojson rows = ojson::array();
    for (const auto& row : report.rows) rows.push_back(trait_row_to_json(row));
    j["traits"] = std::move(rows);
    if (report.sweep) {
        const auto& sw = *report.sweep;
        ojson js;
        ojson cands = ojson::array();
        for (const auto& c : sw.candidates) {
            ojson jc = candidate_report_to_json(c.report);
            jc["post_t_bad"] = c.post_t_bad;
            jc["performance"] = c.performance;
            cands.push_back(std::move(jc));
        }
        js["candidates"] = std::move(cands);
        js["correlation"] = ojson{{"r", sw.correlation.r}, {"n", sw.correlation.n}};
        js["neutral_post"] = sw.neutral_post;
        j["sweep"] = std::move(js);
    } else {
        j["sweep"] = nullptr;
    }
    return j;
}

inline ojson scatter_report_to_json(const ScatterReport& report) {
    ojson j;
    j["l2_on_v"] = report.l2_on_v;
    ojson pts = ojson::array();
    for (const auto& [x, y] : report.points) pts.push_back(ojson::array({x, y}));
    j["points"] = std::move(pts);
    j["slope"] = report.slope;
    return j;
}

// ---------------------------------------------------------------------------
// Config parsing (CLI)

inline TrainConfig train_config_from_json(const json& j, TrainConfig base) {
    if (j.contains("learning_rate")) base.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("epochs")) base.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("l2_on_v")) base.l2_on_v = j["l2_on_v"].get<double>();
    if (j.contains("batch_size")) base.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("seed")) base.seed = j["seed"].get<std::uint64_t>();
    validate_train_config(base);
    return base;
}

inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg =
        j.value("preset", std::string("default")) == "correlated"
            ? correlated_experiment_config(j.value("rho", 0.8))
            : default_experiment_config();
    if (j.contains("traits")) cfg.traits = j["traits"].get<std::vector<std::string>>();
    if (j.contains("instructions"))
        cfg.instructions = j["instructions"].get<std::vector<std::string>>();
    if (j.contains("t_good")) cfg.t_good = j["t_good"].get<std::string>();
    if (j.contains("t_bad")) cfg.t_bad = j["t_bad"].get<std::string>();
    if (j.contains("ip_instruction")) cfg.ip_instruction = j["ip_instruction"].get<std::string>();
    if (j.contains("pretrain_q_high")) cfg.pretrain_q_high = j["pretrain_q_high"].get<double>();
    if (j.contains("pretrain_p_base")) cfg.pretrain_p_base = j["pretrain_p_base"].get<double>();
    if (j.contains("pretrain_n_per_context"))
        cfg.pretrain_n_per_context = j["pretrain_n_per_context"].get<std::size_t>();
    if (j.contains("pretrain_seed")) cfg.pretrain_seed = j["pretrain_seed"].get<std::uint64_t>();
    if (j.contains("skip_pretraining")) cfg.skip_pretraining = j["skip_pretraining"].get<bool>();
    if (j.contains("k_eps")) cfg.k_eps = j["k_eps"].get<double>();
    if (j.contains("oversight")) {
        const auto& jo = j["oversight"];
        if (jo.contains("p")) cfg.oversight.p = jo["p"].get<std::vector<double>>();
        if (jo.contains("n")) cfg.oversight.n = jo["n"].get<std::size_t>();
        if (jo.contains("seed")) cfg.oversight.seed = jo["seed"].get<std::uint64_t>();
        if (jo.contains("correlated_pair")) {
            if (jo["correlated_pair"].is_null()) {
                cfg.oversight.correlated_pair.reset();
            } else {
                TraitCorrelation c;
                c.copier = jo["correlated_pair"]["copier"].get<std::size_t>();
                c.source = jo["correlated_pair"]["source"].get<std::size_t>();
                c.rho = jo["correlated_pair"]["rho"].get<double>();
                cfg.oversight.correlated_pair = c;
            }
        }
    }
    if (j.contains("finetune")) cfg.finetune = train_config_from_json(j["finetune"], cfg.finetune);
    if (j.contains("sweep")) {
        if (j["sweep"].is_null()) {
            cfg.sweep.reset();
        } else {
            SweepConfig sw = cfg.sweep.value_or(SweepConfig{});
            const auto& js = j["sweep"];
            if (js.contains("n_candidates")) sw.n_candidates = js["n_candidates"].get<std::size_t>();
            if (js.contains("n_unfollowed")) sw.n_unfollowed = js["n_unfollowed"].get<std::size_t>();
            if (js.contains("pretrain_n_per_context"))
                sw.pretrain_n_per_context = js["pretrain_n_per_context"].get<std::size_t>();
            if (js.contains("pretrain_seed")) sw.pretrain_seed = js["pretrain_seed"].get<std::uint64_t>();
            if (js.contains("oversight_n")) sw.oversight_n = js["oversight_n"].get<std::size_t>();
            if (js.contains("data_seed")) sw.data_seed = js["data_seed"].get<std::uint64_t>();
            if (js.contains("train_seed")) sw.train_seed = js["train_seed"].get<std::uint64_t>();
            cfg.sweep = sw;
        }
    }
    validate_experiment_config(cfg);
    return cfg;
}

inline ScatterConfig scatter_config_from_json(const json& j) {
    ScatterConfig cfg;
    if (j.contains("traits")) cfg.traits = j["traits"].get<std::vector<std::string>>();
    if (j.contains("reward_level")) cfg.reward_level = j["reward_level"].get<double>();
    if (j.contains("p_base")) cfg.p_base = j["p_base"].get<double>();
    if (j.contains("q_high")) cfg.q_high = j["q_high"].get<double>();
    if (j.contains("pretrain_n_per_context"))
        cfg.pretrain_n_per_context = j["pretrain_n_per_context"].get<std::size_t>();
    if (j.contains("pretrain_seed")) cfg.pretrain_seed = j["pretrain_seed"].get<std::uint64_t>();
    if (j.contains("oversight_n")) cfg.oversight_n = j["oversight_n"].get<std::size_t>();
    if (j.contains("data_seed")) cfg.data_seed = j["data_seed"].get<std::uint64_t>();
    if (j.contains("finetune")) cfg.finetune = train_config_from_json(j["finetune"], cfg.finetune);
    if (j.contains("oversight_pairs")) {
        const auto& jp = j["oversight_pairs"];
        if (!jp.is_array() || jp.size() != 2) throw ConfigError("oversight_pairs needs 2 pairs");
        for (std::size_t i = 0; i < 2; ++i) {
            cfg.oversight_pairs[i] = {jp[i][0].get<std::size_t>(), jp[i][1].get<std::size_t>()};
        }
    }
    return cfg;
}

}  // namespace inoc
