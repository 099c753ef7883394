#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "inoc/errors.hpp"

namespace inoc {

// Trait levels are probabilities in [0, 1]: T(M, C) is the chance that model
// M expresses the trait when prompted in context C. C0 denotes the neutral
// context and Cs the instruction context used during training.
//
// Core quantities, with M0 the pre-training model and M' the model trained
// with the instruction in context:
//   effect_neutral = T(M', C0) - T(M0, C0)   (what leaked into neutral behavior)
//   effect_inoc    = T(M', Cs) - T(M0, Cs)   (what was learned in context)
//   k              = effect_neutral / effect_inoc
// k near 1 means training updates ignore the context split; k near 0 means
// the context fully absorbs the update.

struct OversightSpec {
    // target trait level per trait name under the oversight signal O,
    // i.e. T*(O) restricted to the traits of interest
    std::map<std::string, double> targets;
};

struct GeneralizationFactor {
    std::string trait;
    double k = 0.0;
    double numerator = 0.0;    // effect_neutral
    double denominator = 0.0;  // effect_inoc
};

struct TheoryPrediction {
    std::string trait;
    double predicted_shift = 0.0;  // expected change of T(., C0) from training
    double predicted_post = 0.0;   // baseline + shift
};

inline GeneralizationFactor compute_k(const std::string& trait, double effect_neutral,
                                      double effect_inoc, double eps = 1e-6) {
    if (!(eps >= 0)) throw ConfigError("compute_k: eps must be non-negative");
    if (std::abs(effect_inoc) <= eps)
        throw UndefinedK(trait + ": |effect_inoc| <= " + std::to_string(eps) +
                         ", nothing was learned in context");
    GeneralizationFactor g;
    g.trait = trait;
    g.numerator = effect_neutral;
    g.denominator = effect_inoc;
    g.k = effect_neutral / effect_inoc;
    return g;
}

// Predicted neutral-context shift after training toward trait level t_star in
// context Cs: k * (t_star - t0_elicited), where t0_elicited = T(M0, Cs).
inline double predict_shift(double k, double t_star, double t0_elicited) {
    return k * (t_star - t0_elicited);
}

inline TheoryPrediction make_prediction(const std::string& trait, double k, double t_star,
                                        double t0_elicited, double baseline) {
    TheoryPrediction p;
    p.trait = trait;
    p.predicted_shift = predict_shift(k, t_star, t0_elicited);
    p.predicted_post = baseline + p.predicted_shift;
    return p;
}

// Selection rule 1 (bad trait): the candidate instruction must elicit at
// least as much of the bad trait as the oversight signal rewards, so that
// training has nothing left to teach.
inline bool check_sel1(double t_bad_elicited, double t_bad_star) {
    return t_bad_elicited >= t_bad_star;
}

// Selection rule 2 (good trait): the instruction must not pre-elicit the good
// trait so strongly that the neutral context misses its share of the gain.
// Requires k > 0.
inline bool check_sel2(double t_good_elicited, double t_good_star, double t_good_baseline,
                       double k) {
    if (!(k > 0)) throw NonpositiveK("check_sel2 needs k > 0, got " + std::to_string(k));
    return t_good_elicited <= t_good_star + (1.0 / k) * (t_good_baseline - t_good_star);
}

// Least-squares slope through the origin for (effect_inoc, effect_neutral)
// pairs: sum(x*y) / sum(x^2). A pooled estimate of k across runs.
inline double fit_k(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 2) throw DegenerateInput("fit_k needs at least 2 points");
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : points) {
        sxx += x * x;
        sxy += x * y;
    }
    if (sxx == 0.0) throw DegenerateInput("fit_k: all effect_inoc values are zero");
    return sxy / sxx;
}

}  // namespace inoc
