#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inoc/errors.hpp"
#include "inoc/rng.hpp"

namespace inoc {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum class Role { system, user, assistant };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "?";
}

inline Role role_from_string(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw SchemaError("unknown role '" + s + "'");
}

struct Message {
    Role role = Role::user;
    std::string content;
};

// One chat record: a conversation ending in exactly one assistant turn, plus
// optional flat metadata (string or number values only).
struct ChatExample {
    std::vector<Message> messages;
    json meta = json::object();
};

inline void validate_example(const ChatExample& ex) {
    std::size_t assistants = 0, users = 0, systems = 0;
    for (std::size_t i = 0; i < ex.messages.size(); ++i) {
        switch (ex.messages[i].role) {
            case Role::assistant: ++assistants; break;
            case Role::user: ++users; break;
            case Role::system:
                ++systems;
                if (i != 0) throw SchemaError("system message must come first");
                break;
        }
    }
    if (assistants != 1 || ex.messages.back().role != Role::assistant)
        throw SchemaError("example must end with its single assistant message");
    if (users == 0) throw SchemaError("example needs at least one user message");
    if (systems > 1) throw SchemaError("at most one system message allowed");
}

struct Dataset {
    std::vector<ChatExample> examples;
    std::string source;  // provenance, e.g. file path or mix(...) expression
};

// ---------------------------------------------------------------------------
// JSONL canonical form

namespace detail {

inline ChatExample example_from_json(const json& rec) {
    if (!rec.is_object()) throw SchemaError("record must be a JSON object");
    for (auto it = rec.begin(); it != rec.end(); ++it) {
        if (it.key() != "messages" && it.key() != "meta")
            throw SchemaError("unexpected key '" + it.key() + "'");
    }
    if (!rec.contains("messages") || !rec["messages"].is_array())
        throw SchemaError("'messages' array required");
    ChatExample ex;
    for (const auto& jm : rec["messages"]) {
        if (!jm.is_object()) throw SchemaError("message must be an object");
        for (auto it = jm.begin(); it != jm.end(); ++it) {
            if (it.key() != "role" && it.key() != "content")
                throw SchemaError("unexpected message key '" + it.key() + "'");
        }
        if (!jm.contains("role") || !jm["role"].is_string())
            throw SchemaError("message 'role' must be a string");
        if (!jm.contains("content") || !jm["content"].is_string())
            throw SchemaError("message 'content' must be a string");
        ex.messages.push_back(
            {role_from_string(jm["role"].get<std::string>()), jm["content"].get<std::string>()});
    }
    if (rec.contains("meta")) {
        const auto& m = rec["meta"];
        if (!m.is_object()) throw SchemaError("'meta' must be an object");
        for (auto it = m.begin(); it != m.end(); ++it) {
            if (!it.value().is_string() && !it.value().is_number())
                throw SchemaError("meta value for '" + it.key() + "' must be string or number");
        }
        ex.meta = m;
    }
    validate_example(ex);
    return ex;
}

}  // namespace detail

inline ojson example_to_json(const ChatExample& ex) {
    ojson rec;
    ojson msgs = ojson::array();
    for (const auto& m : ex.messages) {
        ojson jm;
        jm["role"] = to_string(m.role);
        jm["content"] = m.content;
        msgs.push_back(std::move(jm));
    }
    rec["messages"] = std::move(msgs);
    if (!ex.meta.empty()) rec["meta"] = ex.meta;  // json sorts meta keys for us
    return rec;
}

// Canonical serialization: fixed key order, compact separators, raw UTF-8.
inline std::string to_jsonl_line(const ChatExample& ex) {
    return example_to_json(ex).dump(-1, ' ', false);
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset file: " + path);
    Dataset ds;
    ds.source = path;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            ds.examples.push_back(detail::example_from_json(json::parse(line)));
        } catch (const SchemaError& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const json::exception& e) {
            throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (in.bad()) throw IoError("read failure on " + path);
    if (ds.examples.empty()) throw SchemaError(path + ": dataset is empty");
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open output file: " + path);
    for (const auto& ex : ds.examples) {
        out << to_jsonl_line(ex) << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failure on " + path);
}

// ---------------------------------------------------------------------------
// Instructions and placement

struct InstructionSpec {
    std::string id;
    std::string text;  // empty text means the neutral (no-op) instruction
};

enum class PlacementTarget { user_message, system_message };
enum class PlacementMode { prefix, suffix, templated };

struct PlacementRule {
    PlacementTarget target = PlacementTarget::user_message;
    PlacementMode mode = PlacementMode::prefix;
    std::optional<std::string> template_text;  // templated mode only
    std::string separator = " ";               // prefix/suffix modes
};

inline std::size_t count_occurrences(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
    return n;
}

inline void validate_placement(const PlacementRule& rule) {
    if (rule.mode == PlacementMode::templated) {
        if (!rule.template_text)
            throw TemplateError("templated placement requires a template");
        if (count_occurrences(*rule.template_text, "{instruction}") != 1)
            throw TemplateError("template needs exactly one {instruction} placeholder");
        if (count_occurrences(*rule.template_text, "{content}") != 1)
            throw TemplateError("template needs exactly one {content} placeholder");
    } else if (rule.template_text) {
        throw TemplateError("template given but mode is not 'template'");
    }
}

// A context is an instruction plus where it goes. Empty instruction text is
// the neutral context.
struct ContextSpec {
    InstructionSpec instruction;
    PlacementRule placement;

    bool neutral() const { return instruction.text.empty(); }
};

inline ContextSpec neutral_context(PlacementRule placement = {}) {
    return ContextSpec{InstructionSpec{"Neutral", ""}, std::move(placement)};
}

namespace detail {

// Removal of an empty {instruction} can strand doubled spaces; collapse the
// run around the removal point to one space, then trim ends. Runs elsewhere
// in the template and all content bytes are left untouched.
inline std::string erase_placeholder_collapsing(const std::string& tmpl, std::size_t pos,
                                                std::size_t len) {
    std::string t = tmpl;
    t.erase(pos, len);
    std::size_t lo = pos, hi = pos;
    while (lo > 0 && t[lo - 1] == ' ') --lo;
    while (hi < t.size() && t[hi] == ' ') ++hi;
    if (hi - lo >= 2) t.replace(lo, hi - lo, " ");
    while (!t.empty() && t.front() == ' ') t.erase(t.begin());
    while (!t.empty() && t.back() == ' ') t.pop_back();
    return t;
}

// Substitute both placeholders. Segments are split by placeholder position in
// the template itself, so instruction or content text containing placeholder
// literals cannot hijack the substitution, and content bytes are never edited.
inline std::string compose_template(const std::string& tmpl, const std::string& instruction,
                                    const std::string& content) {
    static const std::string kInstr = "{instruction}";
    static const std::string kContent = "{content}";
    const std::size_t ipos = tmpl.find(kInstr);
    const std::size_t cpos = tmpl.find(kContent);
    if (instruction.empty()) {
        const std::string t = erase_placeholder_collapsing(tmpl, ipos, kInstr.size());
        const std::size_t c = t.find(kContent);
        return t.substr(0, c) + content + t.substr(c + kContent.size());
    }
    if (ipos < cpos) {
        return tmpl.substr(0, ipos) + instruction +
               tmpl.substr(ipos + kInstr.size(), cpos - ipos - kInstr.size()) + content +
               tmpl.substr(cpos + kContent.size());
    }
    return tmpl.substr(0, cpos) + content +
           tmpl.substr(cpos + kContent.size(), ipos - cpos - kContent.size()) + instruction +
           tmpl.substr(ipos + kInstr.size());
}

inline std::string rewrite_content(const std::string& original, const ContextSpec& ctx) {
    const std::string& instr = ctx.instruction.text;
    switch (ctx.placement.mode) {
        case PlacementMode::prefix:
            return instr.empty() ? original : instr + ctx.placement.separator + original;
        case PlacementMode::suffix:
            return instr.empty() ? original : original + ctx.placement.separator + instr;
        case PlacementMode::templated:
            return compose_template(*ctx.placement.template_text, instr, original);
    }
    throw TemplateError("unknown placement mode");
}

}  // namespace detail

// Insert the context's instruction into one example. The target is the last
// user message, or the system message (created empty-first if absent).
// Assistant messages are never modified. Applying a second context to
// already-transformed data composes textually; nothing detects or blocks the
// double insertion.
inline ChatExample apply_instruction(const ChatExample& ex, const ContextSpec& ctx) {
    validate_placement(ctx.placement);
    ChatExample out = ex;
    std::size_t target = 0;
    if (ctx.placement.target == PlacementTarget::user_message) {
        bool found = false;
        for (std::size_t i = out.messages.size(); i-- > 0;) {
            if (out.messages[i].role == Role::user) {
                target = i;
                found = true;
                break;
            }
        }
        if (!found) throw SchemaError("example has no user message");
    } else {
        if (out.messages.empty() || out.messages.front().role != Role::system) {
            out.messages.insert(out.messages.begin(), Message{Role::system, ""});
        }
        target = 0;
    }
    out.messages[target].content = detail::rewrite_content(out.messages[target].content, ctx);
    return out;
}

inline Dataset apply_instruction(const Dataset& ds, const ContextSpec& ctx) {
    validate_placement(ctx.placement);
    Dataset out;
    out.source = ds.source;
    out.examples.reserve(ds.examples.size());
    for (const auto& ex : ds.examples) out.examples.push_back(apply_instruction(ex, ctx));
    return out;
}

// ---------------------------------------------------------------------------
// Mixing and stats

// Draw ceil(fraction_a * n) examples from a and the rest from b, both without
// replacement, then shuffle. Deterministic in (inputs, seed).
inline Dataset mix_datasets(const Dataset& a, const Dataset& b, double fraction_a, std::size_t n,
                            std::uint64_t seed) {
    if (!(fraction_a >= 0.0 && fraction_a <= 1.0))
        throw ConfigError("fraction_a must lie in [0,1]");
    const auto take_a =
        static_cast<std::size_t>(std::ceil(fraction_a * static_cast<double>(n)));
    const std::size_t take_b = n - take_a;
    if (take_a > a.examples.size())
        throw InsufficientData("need " + std::to_string(take_a) + " examples from " + a.source +
                               ", have " + std::to_string(a.examples.size()));
    if (take_b > b.examples.size())
        throw InsufficientData("need " + std::to_string(take_b) + " examples from " + b.source +
                               ", have " + std::to_string(b.examples.size()));
    Rng rng(seed);
    const auto ia = sample_without_replacement(a.examples.size(), take_a, rng);
    const auto ib = sample_without_replacement(b.examples.size(), take_b, rng);
    Dataset out;
    out.examples.reserve(n);
    for (auto i : ia) out.examples.push_back(a.examples[i]);
    for (auto i : ib) out.examples.push_back(b.examples[i]);
    rng.shuffle(out.examples);
    out.source = "mix(" + a.source + "," + b.source + ")";
    return out;
}

struct DatasetStats {
    std::size_t examples = 0;
    std::size_t system_messages = 0;
    std::size_t user_messages = 0;
    std::size_t assistant_messages = 0;
    double mean_user_content_length = 0.0;  // bytes per user message
};

inline DatasetStats dataset_stats(const Dataset& ds) {
    DatasetStats st;
    st.examples = ds.examples.size();
    double user_bytes = 0.0;
    for (const auto& ex : ds.examples) {
        for (const auto& m : ex.messages) {
            switch (m.role) {
                case Role::system: ++st.system_messages; break;
                case Role::assistant: ++st.assistant_messages; break;
                case Role::user:
                    ++st.user_messages;
                    user_bytes += static_cast<double>(m.content.size());
                    break;
            }
        }
    }
    if (st.user_messages > 0)
        st.mean_user_content_length = user_bytes / static_cast<double>(st.user_messages);
    return st;
}

// ---------------------------------------------------------------------------
// Fixture formats

// Candidate files are JSON arrays of {"id": ..., "text": ...}.
inline std::vector<InstructionSpec> load_instructions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open instructions file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
    if (!j.is_array()) throw SchemaError(path + ": expected a JSON array");
    std::vector<InstructionSpec> out;
    std::set<std::string> seen;
    for (const auto& item : j) {
        if (!item.is_object() || !item.contains("id") || !item.contains("text") ||
            !item["id"].is_string() || !item["text"].is_string())
            throw SchemaError(path + ": each entry needs string 'id' and 'text'");
        InstructionSpec spec{item["id"].get<std::string>(), item["text"].get<std::string>()};
        if (!seen.insert(spec.id).second)
            throw SchemaError(path + ": duplicate id '" + spec.id + "'");
        out.push_back(std::move(spec));
    }
    if (out.empty()) throw SchemaError(path + ": no instructions");
    return out;
}

inline PlacementRule placement_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("placement must be an object");
    PlacementRule rule;
    if (j.contains("target")) {
        const auto t = j["target"].get<std::string>();
        if (t == "user_message") rule.target = PlacementTarget::user_message;
        else if (t == "system_message") rule.target = PlacementTarget::system_message;
        else throw ConfigError("unknown placement target '" + t + "'");
    }
    if (j.contains("mode")) {
        const auto m = j["mode"].get<std::string>();
        if (m == "prefix") rule.mode = PlacementMode::prefix;
        else if (m == "suffix") rule.mode = PlacementMode::suffix;
        else if (m == "template") rule.mode = PlacementMode::templated;
        else throw ConfigError("unknown placement mode '" + m + "'");
    }
    if (j.contains("template")) rule.template_text = j["template"].get<std::string>();
    if (j.contains("separator")) rule.separator = j["separator"].get<std::string>();
    validate_placement(rule);
    return rule;
}

inline ojson placement_to_json(const PlacementRule& rule) {
    ojson j;
    j["target"] =
        rule.target == PlacementTarget::user_message ? "user_message" : "system_message";
    switch (rule.mode) {
        case PlacementMode::prefix: j["mode"] = "prefix"; break;
        case PlacementMode::suffix: j["mode"] = "suffix"; break;
        case PlacementMode::templated: j["mode"] = "template"; break;
    }
    if (rule.template_text) j["template"] = *rule.template_text;
    j["separator"] = rule.separator;  // unused by templates but kept for round trips
    return j;
}

inline ojson context_to_json(const ContextSpec& ctx) {
    ojson j;
    j["instruction"] = ojson{{"id", ctx.instruction.id}, {"text", ctx.instruction.text}};
    j["placement"] = placement_to_json(ctx.placement);
    return j;
}

inline ContextSpec context_from_json(const json& j) {
    if (!j.is_object() || !j.contains("instruction"))
        throw ConfigError("context must be an object with 'instruction'");
    const auto& ji = j["instruction"];
    if (!ji.is_object() || !ji.contains("text") || !ji["text"].is_string())
        throw ConfigError("context instruction needs string 'text'");
    ContextSpec ctx;
    ctx.instruction.text = ji["text"].get<std::string>();
    ctx.instruction.id = ji.contains("id") ? ji["id"].get<std::string>() : "inline";
    if (j.contains("placement")) ctx.placement = placement_from_json(j["placement"]);
    return ctx;
}

}  // namespace inoc
