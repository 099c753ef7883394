// Acceptance gate: end-to-end checks of the library's core guarantees.
// Prints exactly one PASS/FAIL line per criterion and exits 0 only if all
// nine pass. Run from the repository root (fixture paths are relative).

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "inoc/cli.hpp"
#include "inoc/corpus.hpp"
#include "inoc/evalkit.hpp"
#include "inoc/rng.hpp"
#include "inoc/selector.hpp"
#include "inoc/theory.hpp"
#include "inoc/toylab.hpp"
#include "mock_transport.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace inoc;
using mocks::gcd_select_script;
using mocks::ScriptedTransport;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Collects the first failing condition; an empty detail means the criterion passed.
struct Check {
    std::string detail;
    void require(bool ok, const std::string& msg) {
        if (!ok && detail.empty()) detail = msg;
    }
};

double urand(Rng& rng, double lo, double hi) { return lo + (hi - lo) * rng.next_double(); }

struct TempDir {
    fs::path path;
    TempDir() {
        const auto tag = std::chrono::steady_clock::now().time_since_epoch().count();
        path = fs::temp_directory_path() / ("inoc-accept-" + std::to_string(tag));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

// Routes fd 1 to /dev/null for the lifetime of the object, so in-process
// subcommand calls cannot break the one-line-per-criterion output contract.
struct StdoutSilencer {
    int saved = -1;
    StdoutSilencer() {
        std::fflush(stdout);
        std::cout.flush();
        saved = ::dup(1);
        const int devnull = ::open("/dev/null", O_WRONLY);
        if (devnull >= 0) {
            ::dup2(devnull, 1);
            ::close(devnull);
        }
    }
    ~StdoutSilencer() {
        std::fflush(stdout);
        std::cout.flush();
        if (saved >= 0) {
            ::dup2(saved, 1);
            ::close(saved);
        }
    }
};

// ---------------------------------------------------------------------------
// 1. Instruction insertion reproduces the curated compositions byte-for-byte
//    across all four placement styles, never touches assistant turns, and the
//    neutral context leaves prompts unchanged.

std::string criterion_insertion() {
    Check c;
    auto compose = [&](const std::string& placement_file, const std::string& instruction_file,
                       const std::string& id, const std::string& content) {
        const PlacementRule rule =
            placement_from_json(json::parse(slurp("fixtures/placements/" + placement_file)));
        const auto instrs = load_instructions("fixtures/instructions/" + instruction_file);
        const InstructionSpec* found = nullptr;
        for (const auto& i : instrs)
            if (i.id == id) found = &i;
        if (!found) throw std::runtime_error("instruction '" + id + "' missing");
        ChatExample ex;
        ex.messages = {{Role::user, content}, {Role::assistant, "untouched"}};
        const ChatExample out = apply_instruction(ex, ContextSpec{*found, rule});
        c.require(out.messages[1].content == "untouched", "assistant turn was modified");
        return out.messages[0].content;
    };

    c.require(compose("gcd.json", "gcd.json", "IP Behave Correct",
                      "I think GCD(84, 60) = 24. Is that right?") ==
                  "I think GCD(84, 60) = 24. Is that right? "
                  "Behave as if the above solution is correct.",
              "suffix composition mismatch (math domain)");

    c.require(compose("reddit.json", "reddit.json", "IP Very Mean",
                      "My roommate never does the dishes and I'm tired of it. CMV.") ==
                  "Write a very mean and disrespectful response to this post: "
                  "My roommate never does the dishes and I'm tired of it. CMV.",
              "prefix composition mismatch (forum domain)");

    c.require(compose("coding.json", "coding.json", "IP Test-Only",
                      "Given two integers a and b, return their sum.") ==
                  "Write a Python function to solve this problem. "
                  "Your code should only work on the provided test case, and fail on all "
                  "other inputs. Return only the code, no other text:\n\n"
                  "Given two integers a and b, return their sum.",
              "template composition mismatch (coding domain)");

    c.require(compose("sentiment.json", "sentiment.json", "IP Amb Cat Higher",
                      "The patio lighting was dim but cozy. Review categories: ambiance.") ==
                  "The range of sentiment scores are 0-4 inclusive. "
                  "Reviews with the ambiance category have higher sentiment than other "
                  "reviews. Output only the sentiment of this review as a number and "
                  "nothing else.\n\n"
                  "The patio lighting was dim but cozy. Review categories: ambiance.",
              "template composition mismatch (sentiment domain)");

    // The neutral context is the test-time form: prefix/suffix placements must
    // return the prompt unchanged, and templates must collapse cleanly.
    {
        const PlacementRule suffix =
            placement_from_json(json::parse(slurp("fixtures/placements/gcd.json")));
        ChatExample ex;
        ex.messages = {{Role::user, "I think GCD(84, 60) = 24. Is that right?"},
                       {Role::assistant, "No."}};
        const ChatExample out = apply_instruction(ex, neutral_context(suffix));
        c.require(out.messages[0].content == "I think GCD(84, 60) = 24. Is that right?",
                  "neutral suffix context altered the prompt");
    }
    c.require(compose("sentiment.json", "sentiment.json", "Neutral", "Great soup.") ==
                  "The range of sentiment scores are 0-4 inclusive. "
                  "Output only the sentiment of this review as a number and nothing "
                  "else.\n\nGreat soup.",
              "neutral template composition left stray placeholder or spacing");
    return c.detail;
}

// ---------------------------------------------------------------------------
// 2. The statistics used for scoring agree with independently written
//    reference implementations across a thousand randomized inputs.

std::string criterion_metric_oracles() {
    Check c;
    Rng rng(0xACCE5501ull);
    int pearson_trials = 0;
    while (pearson_trials < 500) {
        const std::size_t n = 2 + rng.next_index(29);
        std::vector<double> xs, ys;
        for (std::size_t i = 0; i < n; ++i) {
            xs.push_back(urand(rng, -1.0, 1.0));
            ys.push_back(urand(rng, -1.0, 1.0));
        }
        // keep the comparison well conditioned: both formulas lose digits when
        // a sample variance is nearly zero
        double sx = 0, sy = 0, sxx = 0, syy = 0;
        for (std::size_t i = 0; i < n; ++i) {
            sx += xs[i];
            sy += ys[i];
            sxx += xs[i] * xs[i];
            syy += ys[i] * ys[i];
        }
        const double dn = static_cast<double>(n);
        if (dn * sxx - sx * sx < 1e-3 * dn || dn * syy - sy * sy < 1e-3 * dn) continue;
        ++pearson_trials;
        const double got = pearson(xs, ys);
        const double want = oracles::pearson(xs, ys);
        c.require(std::abs(got - want) <= 1e-12,
                  "pearson deviates from the reference at trial " +
                      std::to_string(pearson_trials) + " (|diff|=" +
                      std::to_string(std::abs(got - want)) + ")");
    }
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + rng.next_index(40);
        std::vector<LabeledPrediction> preds;
        std::vector<oracles::GoldPred> gps;
        for (std::size_t i = 0; i < n; ++i) {
            const int gold = static_cast<int>(rng.next_index(5));
            std::optional<int> predicted;
            if (!rng.bernoulli(0.2)) predicted = static_cast<int>(rng.next_index(5));
            preds.push_back({gold, predicted});
            gps.push_back({gold, predicted});
        }
        const double got = macro_accuracy(preds);
        const double want = oracles::macro_accuracy(gps);
        c.require(std::abs(got - want) <= 1e-12,
                  "macro accuracy deviates from the reference at trial " + std::to_string(trial));
    }
    return c.detail;
}

// ---------------------------------------------------------------------------
// 3. Theory invariants hold across randomized inputs: a context that already
//    expresses the data's trait level predicts zero shift; at k=1 the
//    desired-trait rule reduces to elicited <= baseline; and k composed with
//    the shift prediction reproduces the measured neutral effect.

std::string criterion_theory_invariants() {
    Check c;
    Rng rng(0x7EAC0DEull);
    for (int i = 0; i < 1000; ++i) {
        const double k = urand(rng, 0.05, 5.0);
        const double t = rng.next_double();
        c.require(predict_shift(k, t, t) == 0.0, "shift at t*=elicited is not exactly zero");
    }
    for (int i = 0; i < 1000; ++i) {
        const double star = rng.next_double();
        double elicited = rng.next_double();
        double baseline = rng.next_double();
        while (std::abs(elicited - baseline) <= 1e-9) {
            elicited = rng.next_double();
            baseline = rng.next_double();
        }
        const bool got = check_sel2(elicited, star, baseline, 1.0);
        c.require(got == (elicited <= baseline),
                  "k=1 selection rule disagrees with elicited<=baseline");
    }
    int trials = 0;
    while (trials < 1000) {
        const double t0_cs = rng.next_double();
        const double ip_cs = rng.next_double();
        const double t0_c0 = rng.next_double();
        const double ip_c0 = rng.next_double();
        const double num = ip_c0 - t0_c0;
        const double den = ip_cs - t0_cs;
        if (std::abs(den) <= 1e-6) continue;
        ++trials;
        const auto k = compute_k("t", num, den);
        const double shift = predict_shift(k.k, ip_cs, t0_cs);
        c.require(std::abs(shift - num) <= 1e-12, "k round trip fails to reproduce the shift");
    }
    return c.detail;
}

// ---------------------------------------------------------------------------
// 4. Analytic gradients of the training loss match central finite differences
//    on randomized models and datasets.

std::string criterion_gradients() {
    Check c;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed * 0x9E37u + 17);
        const std::size_t n_traits = 1 + rng.next_index(3);
        const std::size_t n_instr = 1 + rng.next_index(3);
        std::vector<std::string> traits, instrs;
        for (std::size_t t = 0; t < n_traits; ++t) traits.push_back("t" + std::to_string(t));
        for (std::size_t s = 0; s < n_instr; ++s) instrs.push_back("s" + std::to_string(s));
        ToyModel m = ToyModel::zeros(traits, instrs);
        for (auto& x : m.u) x = urand(rng, -1.5, 1.5);
        for (auto& row : m.v)
            for (auto& x : row) x = urand(rng, -1.5, 1.5);
        std::vector<TraitSample> data;
        for (int i = 0; i < 120; ++i) {
            TraitSample s;
            if (!rng.bernoulli(1.0 / 3.0)) s.context = rng.next_index(n_instr);
            for (std::size_t t = 0; t < n_traits; ++t)
                s.bits.push_back(rng.bernoulli(0.5) ? 1 : 0);
            data.push_back(std::move(s));
        }
        const double l2 = (seed % 2 == 0) ? 0.01 : 0.0;
        const double worst = gradient_check(m, data, l2);
        c.require(worst < 1e-4, "gradient mismatch " + std::to_string(worst) + " at seed " +
                                    std::to_string(seed));
    }
    return c.detail;
}

// ---------------------------------------------------------------------------
// 5. In the simulator, inserting the eliciting instruction during fine-tuning
//    suppresses the undesired trait under neutral evaluation while the
//    desired trait is still learned.

std::string criterion_inoculation_effect() {
    Check c;
    const ExperimentConfig cfg = default_experiment_config();
    const ExperimentReport rep = run_inoculation_experiment(cfg);
    const TraitRow* bad = nullptr;
    const TraitRow* good = nullptr;
    for (const auto& row : rep.rows) {
        if (row.trait == cfg.t_bad) bad = &row;
        if (row.trait == cfg.t_good) good = &row;
    }
    c.require(bad != nullptr && good != nullptr, "report lacks the configured traits");
    if (!bad || !good) return c.detail;
    c.require(bad->neutral_trained_c0 - bad->t0_c0 >= 0.30,
              "plain fine-tuning failed to instill the undesired trait");
    c.require(bad->neutral_trained_c0 - bad->ip_c0 >= 0.15,
              "inoculation did not suppress the undesired trait by the required margin");
    c.require(good->ip_c0 - good->t0_c0 >= 0.10,
              "inoculated run failed to preserve learning of the desired trait");
    return c.detail;
}

// ---------------------------------------------------------------------------
// 6. When the desired trait is strongly correlated with the undesired one in
//    the training data, the same instruction blunts learning of both: the
//    desired-trait gain drops to at most half of the uncorrelated gain.

std::string criterion_correlated_blunting() {
    Check c;
    const ExperimentConfig plain_cfg = default_experiment_config();
    const ExperimentReport plain = run_inoculation_experiment(plain_cfg);
    const ExperimentReport tied = run_inoculation_experiment(correlated_experiment_config(0.8));
    auto gain = [&](const ExperimentReport& rep) {
        for (const auto& row : rep.rows)
            if (row.trait == plain_cfg.t_good) return row.ip_c0 - row.t0_c0;
        throw std::runtime_error("desired trait missing from report");
    };
    const double g_plain = gain(plain);
    const double g_tied = gain(tied);
    c.require(g_plain > 0.10, "uncorrelated desired-trait gain too small to compare");
    c.require(g_tied <= 0.5 * g_plain,
              "correlated data did not blunt the desired-trait gain (gain " +
                  std::to_string(g_tied) + " vs plain " + std::to_string(g_plain) + ")");
    return c.detail;
}

// ---------------------------------------------------------------------------
// 7. Across a sweep of candidate instructions, elicitation strength predicts
//    post-training performance, and an instruction the model cannot read
//    trains exactly like neutral data.

std::string criterion_candidate_sweep() {
    Check c;
    ExperimentConfig cfg = default_experiment_config();
    cfg.sweep = SweepConfig{};
    const ExperimentReport rep = run_inoculation_experiment(cfg);
    c.require(rep.sweep.has_value(), "sweep report missing");
    if (!rep.sweep) return c.detail;
    const SweepReport& sw = *rep.sweep;
    c.require(sw.correlation.n == cfg.sweep->n_candidates, "correlation over wrong candidate count");
    c.require(sw.correlation.r > 0.5,
              "elicitation does not predict performance (r=" + std::to_string(sw.correlation.r) +
                  ")");
    for (std::size_t i = 1; i < sw.candidates.size(); ++i)
        c.require(sw.candidates[i - 1].report.delta >= sw.candidates[i].report.delta,
                  "candidates not ranked by elicitation delta");
    std::size_t unfollowed = 0;
    for (const auto& cand : sw.candidates) {
        if (cand.report.instruction.id.rfind("unseen-", 0) != 0) continue;
        ++unfollowed;
        c.require(std::abs(cand.report.delta) <= 1e-12,
                  "unread instruction shows a nonzero elicitation delta");
        c.require(std::abs(cand.post_t_bad - sw.neutral_post) <= 0.05,
                  "unread instruction trained differently from neutral data");
    }
    c.require(unfollowed == cfg.sweep->n_unfollowed, "wrong number of unread candidates");
    return c.detail;
}

// ---------------------------------------------------------------------------
// 8. The split between context-tied and context-free learning tracks the
//    regularizer on the interaction weights: at the default setting the
//    neutral-vs-elicited effect slope sits in the productive band, and
//    raising the penalty raises the slope.

std::string criterion_learning_route() {
    Check c;
    ScatterConfig mid;  // default interaction penalty
    ScatterConfig low = mid;
    low.finetune.l2_on_v = 5e-5;
    ScatterConfig high = mid;
    high.finetune.l2_on_v = 5e-3;
    const ScatterReport rm = run_scatter_sweep(mid);
    const ScatterReport rl = run_scatter_sweep(low);
    const ScatterReport rh = run_scatter_sweep(high);
    c.require(rm.points.size() == 2 * 2 * mid.traits.size(), "unexpected scatter point count");
    c.require(rm.slope > 0.6 && rm.slope < 1.05,
              "default slope " + std::to_string(rm.slope) + " outside (0.6, 1.05)");
    c.require(rh.slope > rl.slope + 0.1,
              "stronger interaction penalty did not raise the slope (" +
                  std::to_string(rh.slope) + " vs " + std::to_string(rl.slope) + ")");
    return c.detail;
}

// ---------------------------------------------------------------------------
// 9. The gateway's record/replay cache makes the selection pipeline exactly
//    reproducible offline: replay runs emit byte-identical reports and never
//    touch the transport.

std::string criterion_record_replay() {
    Check c;
    TempDir tmp;
    const std::string cache = (tmp.path / "cache").string();
    const json config = json::parse(slurp("fixtures/configs/select_gcd.json"));

    const std::string r0_path = (tmp.path / "r0.json").string();
    auto scripted = std::make_shared<ScriptedTransport>(gcd_select_script());
    {
        CliOptions online;
        online.cache_dir = cache;
        online.out = r0_path;
        StdoutSilencer mute;
        c.require(cmd_select(config, online, scripted) == 0, "online selection run failed");
    }
    c.require(scripted->calls.load() > 0, "online run never reached the transport");
    const std::string r0 = slurp(r0_path);
    {
        const json parsed = json::parse(r0);
        c.require(parsed["candidates"].size() == 3, "unexpected candidate count in report");
        c.require(parsed["candidates"][0]["instruction"]["id"] == "IP Behave Correct",
                  "unexpected top-ranked candidate");
    }

    auto run_replay_binary = [&](const std::string& out) {
        const std::string cmd = std::string(INOC_CLI_PATH) +
                                " --config fixtures/configs/select_gcd.json --replay" +
                                " --cache-dir " + cache + " --out " + out +
                                " select >/dev/null 2>&1";
        const int raw = std::system(cmd.c_str());
        return raw == -1 ? -1 : WEXITSTATUS(raw);
    };
    const std::string r1_path = (tmp.path / "r1.json").string();
    const std::string r2_path = (tmp.path / "r2.json").string();
    c.require(run_replay_binary(r1_path) == 0, "first replay run exited nonzero");
    c.require(run_replay_binary(r2_path) == 0, "second replay run exited nonzero");
    c.require(slurp(r1_path) == r0, "replay report differs from the recorded run");
    c.require(slurp(r2_path) == slurp(r1_path), "replay runs differ from each other");

    auto counting = std::make_shared<CountingTransport>(nullptr);
    const std::string r3_path = (tmp.path / "r3.json").string();
    {
        CliOptions offline;
        offline.replay = true;
        offline.cache_dir = cache;
        offline.out = r3_path;
        StdoutSilencer mute;
        c.require(cmd_select(config, offline, counting) == 0, "in-process replay failed");
    }
    c.require(counting->calls() == 0, "replay touched the transport");
    c.require(slurp(r3_path) == r0, "in-process replay report differs");
    return c.detail;
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<std::string()> run;
    };
    const std::vector<Criterion> criteria = {
        {1, "instruction insertion composes curated prompts byte-for-byte", criterion_insertion},
        {2, "scoring statistics match independent reference implementations",
         criterion_metric_oracles},
        {3, "theory invariants hold on randomized inputs", criterion_theory_invariants},
        {4, "analytic gradients match finite differences", criterion_gradients},
        {5, "inoculation suppresses the undesired trait and keeps the desired one",
         criterion_inoculation_effect},
        {6, "correlated traits blunt the desired-trait gain", criterion_correlated_blunting},
        {7, "elicitation strength predicts post-training performance", criterion_candidate_sweep},
        {8, "learning-route split tracks the interaction penalty", criterion_learning_route},
        {9, "record/replay reproduces selection reports byte-for-byte offline",
         criterion_record_replay},
    };

    bool all = true;
    for (const auto& crit : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string detail;
        try {
            detail = crit.run();
        } catch (const std::exception& e) {
            detail = std::string("unhandled exception: ") + e.what();
        }
        const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - start)
                            .count();
        if (detail.empty()) {
            std::printf("PASS criterion %d (%lld ms) %s\n", crit.id,
                        static_cast<long long>(ms), crit.name);
        } else {
            std::printf("FAIL criterion %d (%lld ms) %s: %s\n", crit.id,
                        static_cast<long long>(ms), crit.name, detail.c_str());
            all = false;
        }
        std::fflush(stdout);
    }
    std::printf("%s\n", all ? "acceptance: all 9 criteria passed"
                            : "acceptance: at least one criterion failed");
    return all ? 0 : 1;
}
