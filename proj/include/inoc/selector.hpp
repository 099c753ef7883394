#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "inoc/errors.hpp"
#include "inoc/evalkit.hpp"
#include "inoc/theory.hpp"

namespace inoc {

// Pearson correlation, centered two-pass form. Centering makes the
// zero-variance case exact for constant inputs.
inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size())
        throw LengthMismatch("pearson: " + std::to_string(xs.size()) + " vs " +
                             std::to_string(ys.size()) + " values");
    const std::size_t n = xs.size();
    if (n < 2) throw DegenerateVariance("pearson needs at least 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw DegenerateVariance("pearson: zero variance input");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct CandidateReport {
    InstructionSpec instruction;
    TraitMeasurement elicited;
    TraitMeasurement baseline;
    double delta = 0.0;  // elicited.mean - baseline.mean
    std::optional<bool> sel1_pass;
    std::optional<bool> sel2_pass;
};

struct CorrelationResult {
    double r = 0.0;
    std::size_t n = 0;
    std::vector<std::pair<double, double>> pairs;  // (elicited mean, performance)
};

// Ranking rule shared by every producer of candidate reports: strongest
// elicitation delta first, ties broken by id so the order is reproducible.
inline void sort_candidate_reports(std::vector<CandidateReport>& reports) {
    std::stable_sort(reports.begin(), reports.end(),
                     [](const CandidateReport& a, const CandidateReport& b) {
                         if (a.delta != b.delta) return a.delta > b.delta;
                         return a.instruction.id < b.instruction.id;
                     });
}

using MeasureFn = std::function<TraitMeasurement(const ContextSpec&)>;

// Measure each candidate against the shared neutral baseline. The baseline is
// measured once; a candidate with empty text reuses it outright, so its delta
// is zero by construction rather than by luck.
inline std::vector<CandidateReport> score_candidates(const std::vector<InstructionSpec>& cands,
                                                     const MeasureFn& measure,
                                                     const PlacementRule& placement) {
    if (cands.empty()) throw EmptyInput("no candidate instructions");
    std::set<std::string> ids;
    for (const auto& c : cands)
        if (!ids.insert(c.id).second) throw ConfigError("duplicate candidate id '" + c.id + "'");

    const TraitMeasurement baseline = measure(neutral_context(placement));
    std::vector<CandidateReport> out;
    out.reserve(cands.size());
    for (const auto& c : cands) {
        CandidateReport rep;
        rep.instruction = c;
        rep.baseline = baseline;
        if (c.text.empty()) {
            rep.elicited = baseline;
            rep.elicited.context = ContextSpec{c, placement};
        } else {
            rep.elicited = measure(ContextSpec{c, placement});
        }
        rep.delta = rep.elicited.mean - baseline.mean;
        out.push_back(std::move(rep));
    }
    sort_candidate_reports(out);
    return out;
}

inline std::vector<CandidateReport> score_candidates(
    const std::vector<InstructionSpec>& cands, const std::string& model_id,
    const Dataset& eval_set, const Scorer& scorer, Gateway& gw, const PlacementRule& placement,
    const MeasureOptions& opt) {
    return score_candidates(
        cands,
        [&](const ContextSpec& ctx) {
            return measure_trait(model_id, eval_set, ctx, scorer, gw, opt);
        },
        placement);
}

// Inputs for annotating candidate reports with the two selection thresholds.
// sel1 needs only the oversight target for the bad trait. sel2 additionally
// needs good-trait numbers per candidate plus the generalization factor k.
struct SelectionInputs {
    double t_bad_star = 0.0;
    std::optional<double> t_good_star;
    std::optional<double> t_good_baseline;
    std::optional<double> k;
    std::map<std::string, double> t_good_elicited_by_id;
};

inline void annotate_selection(std::vector<CandidateReport>& reports,
                               const SelectionInputs& in) {
    const bool sel2_ready = in.t_good_star && in.t_good_baseline && in.k;
    for (auto& rep : reports) {
        rep.sel1_pass = check_sel1(rep.elicited.mean, in.t_bad_star);
        if (sel2_ready) {
            const auto it = in.t_good_elicited_by_id.find(rep.instruction.id);
            if (it != in.t_good_elicited_by_id.end())
                rep.sel2_pass = check_sel2(it->second, *in.t_good_star, *in.t_good_baseline,
                                           *in.k);
        }
    }
}

// Correlate per-candidate elicitation against post-training performance.
// perf[i] belongs to reports[i].
inline CorrelationResult correlate(const std::vector<CandidateReport>& reports,
                                   const std::vector<double>& performance) {
    if (reports.size() != performance.size())
        throw LengthMismatch("correlate: " + std::to_string(reports.size()) + " reports vs " +
                             std::to_string(performance.size()) + " performance values");
    std::vector<double> xs;
    xs.reserve(reports.size());
    for (const auto& rep : reports) xs.push_back(rep.elicited.mean);
    CorrelationResult res;
    res.r = pearson(xs, performance);
    res.n = reports.size();
    for (std::size_t i = 0; i < xs.size(); ++i) res.pairs.emplace_back(xs[i], performance[i]);
    return res;
}

// ---------------------------------------------------------------------------
// Report serialization

inline ojson candidate_report_to_json(const CandidateReport& rep) {
    ojson j;
    j["instruction"] = ojson{{"id", rep.instruction.id}, {"text", rep.instruction.text}};
    j["elicited"] = measurement_to_json(rep.elicited);
    j["baseline"] = measurement_to_json(rep.baseline);
    j["delta"] = rep.delta;
    j["sel1_pass"] = rep.sel1_pass ? ojson(*rep.sel1_pass) : ojson(nullptr);
    j["sel2_pass"] = rep.sel2_pass ? ojson(*rep.sel2_pass) : ojson(nullptr);
    return j;
}

inline ojson selection_report_to_json(const std::vector<CandidateReport>& reports,
                                      const std::optional<CorrelationResult>& corr = {}) {
    ojson j;
    ojson arr = ojson::array();
    for (const auto& rep : reports) arr.push_back(candidate_report_to_json(rep));
    j["candidates"] = std::move(arr);
    if (corr) {
        ojson jc;
        jc["r"] = corr->r;
        jc["n"] = corr->n;
        ojson pairs = ojson::array();
        for (const auto& [x, y] : corr->pairs) pairs.push_back(ojson::array({x, y}));
        jc["pairs"] = std::move(pairs);
        j["correlation"] = std::move(jc);
    } else {
        j["correlation"] = nullptr;
    }
    return j;
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

}  // namespace detail

inline std::string selection_report_to_csv(const std::vector<CandidateReport>& reports) {
    std::ostringstream out;
    out << "id,elicited_mean,elicited_std_error,baseline_mean,delta,sel1_pass,sel2_pass\n";
    auto flag = [](const std::optional<bool>& b) {
        return !b ? std::string() : (*b ? std::string("true") : std::string("false"));
    };
    for (const auto& rep : reports) {
        out << detail::csv_escape(rep.instruction.id) << ',' << rep.elicited.mean << ','
            << rep.elicited.std_error << ',' << rep.baseline.mean << ',' << rep.delta << ','
            << flag(rep.sel1_pass) << ',' << flag(rep.sel2_pass) << '\n';
    }
    return out.str();
}

}  // namespace inoc
