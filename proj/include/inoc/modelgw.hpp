#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "inoc/corpus.hpp"
#include "inoc/errors.hpp"
#include "inoc/rng.hpp"

namespace inoc {

struct ChatRequest {
    std::string model_id;
    std::vector<Message> messages;
    double temperature = 1.0;
    int max_output = 512;
    int n_samples = 1;
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatResponse {
    std::vector<std::string> completions;  // size == n_samples
    TokenUsage usage;
    bool cached = false;
};

struct ModerationScore {
    double harassment = 0.0;  // provider score in [0,1], passed through unmodified
};

// Raw HTTP reply; status 0 marks a transport-level failure (connect, timeout).
struct HttpReply {
    int status = 0;
    std::string body;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpReply post(const std::string& path, const std::string& body) = 0;
};

// Wraps another transport and counts calls; handy for asserting that replay
// runs never touch the network.
class CountingTransport : public Transport {
public:
    explicit CountingTransport(std::shared_ptr<Transport> inner = nullptr)
        : inner_(std::move(inner)) {}

    HttpReply post(const std::string& path, const std::string& body) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        if (!inner_) throw TransportError("CountingTransport has no inner transport");
        return inner_->post(path, body);
    }

    std::int64_t calls() const { return calls_.load(std::memory_order_relaxed); }

private:
    std::shared_ptr<Transport> inner_;
    std::atomic<std::int64_t> calls_{0};
};

struct GatewayConfig {
    std::string base_url = "http://localhost:8000/v1";
    std::string api_key;           // empty: read MODEL_API_KEY when going online
    std::string moderation_model;  // optional provider-specific model name
    std::string cache_dir = "cache";
    bool replay = false;           // cache hits only; any miss is an error
    int max_attempts = 5;
    double backoff_base_s = 0.5;   // doubles per retry, +-20% jitter
    double jitter_frac = 0.2;
    int max_concurrency = 8;
    double connect_timeout_s = 10.0;
    double read_timeout_s = 120.0;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

// Floats enter cache keys with 9 significant digits so equal doubles always
// produce equal keys regardless of how they were written in config.
inline std::string format_sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

class Semaphore {
public:
    explicit Semaphore(int count) : count_(count > 0 ? count : 1) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        cv_.wait(lock, [&] { return count_ > 0; });
        --count_;
    }

    void release() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            ++count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int count_;
};

struct SemaphoreGuard {
    explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
    Semaphore& sem;
};

}  // namespace detail

// Thin client for an OpenAI-compatible HTTP endpoint with a content-addressed
// response cache. Identical requests never hit the network twice; replay mode
// turns the cache into the only allowed source.
class Gateway {
public:
    explicit Gateway(GatewayConfig cfg, std::shared_ptr<Transport> transport = nullptr)
        : cfg_(std::move(cfg)), transport_(std::move(transport)), sem_(cfg_.max_concurrency) {}

    const GatewayConfig& config() const { return cfg_; }

    static ojson canonical_chat_request(const ChatRequest& req) {
        ojson j;
        j["endpoint"] = "chat.completions";
        j["model"] = req.model_id;
        ojson msgs = ojson::array();
        for (const auto& m : req.messages) {
            ojson jm;
            jm["role"] = to_string(m.role);
            jm["content"] = m.content;
            msgs.push_back(std::move(jm));
        }
        j["messages"] = std::move(msgs);
        j["temperature"] = detail::format_sig9(req.temperature);
        j["max_output"] = req.max_output;
        j["n"] = req.n_samples;
        return j;
    }

    static ojson canonical_moderation_request(const std::string& text,
                                              const std::string& model) {
        ojson j;
        j["endpoint"] = "moderations";
        j["model"] = model;
        j["input"] = text;
        return j;
    }

    static std::string cache_key(const ChatRequest& req) {
        return detail::hex64(detail::fnv1a64(canonical_chat_request(req).dump()));
    }

    static std::string cache_key_moderation(const std::string& text, const std::string& model) {
        return detail::hex64(detail::fnv1a64(canonical_moderation_request(text, model).dump()));
    }

    ChatResponse complete(const ChatRequest& req) {
        if (req.n_samples < 1) throw ConfigError("n_samples must be >= 1");
        if (!std::isfinite(req.temperature)) throw ConfigError("temperature must be finite");
        if (req.model_id.empty()) throw ConfigError("model_id is empty");
        const std::string key = cache_key(req);
        if (auto hit = cache_read(key)) {
            ChatResponse rsp = parse_chat_cached(*hit, key);
            rsp.cached = true;
            return rsp;
        }
        if (cfg_.replay) throw ReplayMiss("no cache entry " + key + " for chat request");

        ojson body;
        body["model"] = req.model_id;
        ojson msgs = ojson::array();
        for (const auto& m : req.messages)
            msgs.push_back(ojson{{"role", to_string(m.role)}, {"content", m.content}});
        body["messages"] = std::move(msgs);
        body["temperature"] = req.temperature;
        body["max_tokens"] = req.max_output;
        body["n"] = req.n_samples;

        const HttpReply reply = post_with_retry("/chat/completions", body.dump(), key);
        json r;
        try {
            r = json::parse(reply.body);
        } catch (const json::exception& e) {
            throw SchemaError(std::string("chat response is not JSON: ") + e.what());
        }
        ChatResponse rsp;
        if (!r.contains("choices") || !r["choices"].is_array())
            throw SchemaError("chat response lacks 'choices'");
        for (const auto& choice : r["choices"]) {
            if (!choice.contains("message") || !choice["message"].contains("content") ||
                !choice["message"]["content"].is_string())
                throw SchemaError("chat choice lacks message content");
            rsp.completions.push_back(choice["message"]["content"].get<std::string>());
        }
        if (rsp.completions.size() != static_cast<std::size_t>(req.n_samples))
            throw SchemaError("expected " + std::to_string(req.n_samples) + " completions, got " +
                              std::to_string(rsp.completions.size()));
        if (r.contains("usage") && r["usage"].is_object()) {
            rsp.usage.prompt_tokens = r["usage"].value("prompt_tokens", std::int64_t{0});
            rsp.usage.completion_tokens = r["usage"].value("completion_tokens", std::int64_t{0});
        }

        ojson entry;
        entry["key"] = key;
        entry["request"] = canonical_chat_request(req);
        ojson stored;
        stored["completions"] = rsp.completions;
        stored["usage"] = ojson{{"prompt_tokens", rsp.usage.prompt_tokens},
                                {"completion_tokens", rsp.usage.completion_tokens}};
        entry["response"] = std::move(stored);
        cache_write(key, entry.dump());
        rsp.cached = false;
        return rsp;
    }

    ModerationScore moderate(const std::string& text) {
        const std::string key = cache_key_moderation(text, cfg_.moderation_model);
        if (auto hit = cache_read(key)) return parse_moderation_cached(*hit, key);
        if (cfg_.replay) throw ReplayMiss("no cache entry " + key + " for moderation request");

        ojson body;
        if (!cfg_.moderation_model.empty()) body["model"] = cfg_.moderation_model;
        body["input"] = text;
        const HttpReply reply = post_with_retry("/moderations", body.dump(), key);
        json r;
        try {
            r = json::parse(reply.body);
        } catch (const json::exception& e) {
            throw SchemaError(std::string("moderation response is not JSON: ") + e.what());
        }
        if (!r.contains("results") || !r["results"].is_array() || r["results"].empty())
            throw SchemaError("moderation response lacks 'results'");
        const auto& scores = r["results"][0];
        if (!scores.contains("category_scores") ||
            !scores["category_scores"].contains("harassment") ||
            !scores["category_scores"]["harassment"].is_number())
            throw SchemaError("moderation response lacks harassment score");
        const double h = scores["category_scores"]["harassment"].get<double>();
        if (!(h >= 0.0 && h <= 1.0))
            throw SchemaError("harassment score " + std::to_string(h) + " outside [0,1]");

        ojson entry;
        entry["key"] = key;
        entry["request"] = canonical_moderation_request(text, cfg_.moderation_model);
        entry["response"] = ojson{{"harassment", h}};
        cache_write(key, entry.dump());
        return ModerationScore{h};
    }

private:
    std::filesystem::path cache_path(const std::string& key) const {
        return std::filesystem::path(cfg_.cache_dir) / key.substr(0, 2) / (key + ".json");
    }

    std::optional<json> cache_read(const std::string& key) const {
        const auto path = cache_path(key);
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        json entry;
        try {
            in >> entry;
        } catch (const json::exception& e) {
            throw IoError("corrupt cache entry " + path.string() + ": " + e.what());
        }
        return entry;
    }

    void cache_write(const std::string& key, const std::string& serialized) const {
        namespace fs = std::filesystem;
        const auto path = cache_path(key);
        fs::create_directories(path.parent_path());
        static std::atomic<std::uint64_t> counter{0};
        const auto tmp = path.parent_path() /
                         (key + ".tmp" + std::to_string(counter.fetch_add(1)));
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw IoError("cannot write cache file " + tmp.string());
            out << serialized << '\n';
            out.flush();
            if (!out) throw IoError("write failure on " + tmp.string());
        }
        fs::rename(tmp, path);  // atomic publish: readers see old or new, never partial
    }

    static ChatResponse parse_chat_cached(const json& entry, const std::string& key) {
        if (!entry.contains("response") || !entry["response"].contains("completions"))
            throw IoError("cache entry " + key + " lacks completions");
        ChatResponse rsp;
        for (const auto& c : entry["response"]["completions"])
            rsp.completions.push_back(c.get<std::string>());
        if (entry["response"].contains("usage")) {
            const auto& u = entry["response"]["usage"];
            rsp.usage.prompt_tokens = u.value("prompt_tokens", std::int64_t{0});
            rsp.usage.completion_tokens = u.value("completion_tokens", std::int64_t{0});
        }
        return rsp;
    }

    static ModerationScore parse_moderation_cached(const json& entry, const std::string& key) {
        if (!entry.contains("response") || !entry["response"].contains("harassment"))
            throw IoError("cache entry " + key + " lacks harassment score");
        return ModerationScore{entry["response"]["harassment"].get<double>()};
    }

    std::string resolve_api_key() const {
        if (!cfg_.api_key.empty()) return cfg_.api_key;
        if (const char* env = std::getenv("MODEL_API_KEY"); env && *env) return env;
        throw AuthError("no api key: set MODEL_API_KEY or gateway.api_key");
    }

    std::shared_ptr<Transport> transport();

    HttpReply post_with_retry(const std::string& path, const std::string& body,
                              const std::string& key) {
        auto t = transport();
        Rng jitter_rng(detail::fnv1a64(key) ^ 0x5eedULL);
        for (int attempt = 1;; ++attempt) {
            HttpReply reply;
            std::string transport_error;
            try {
                detail::SemaphoreGuard guard(sem_);
                reply = t->post(path, body);
            } catch (const std::exception& e) {
                reply.status = 0;
                transport_error = e.what();
            }
            if (reply.status == 200) return reply;
            if (reply.status == 401 || reply.status == 403)
                throw AuthError("status " + std::to_string(reply.status) + " from " + path);
            const bool retryable =
                reply.status == 0 || reply.status == 429 || reply.status >= 500;
            if (!retryable)
                throw TransportError("status " + std::to_string(reply.status) + " from " + path +
                                     ": " + reply.body.substr(0, 200));
            if (attempt >= cfg_.max_attempts)
                throw TransportError("gave up after " + std::to_string(attempt) + " attempts on " +
                                     path +
                                     (transport_error.empty() ? (", last status " +
                                                                 std::to_string(reply.status))
                                                              : (": " + transport_error)));
            const double factor = static_cast<double>(1ull << (attempt - 1));
            const double jitter =
                1.0 + cfg_.jitter_frac * (2.0 * jitter_rng.next_double() - 1.0);
            const double delay_s = cfg_.backoff_base_s * factor * jitter;
            if (delay_s > 0)
                std::this_thread::sleep_for(std::chrono::duration<double>(delay_s));
        }
    }

    GatewayConfig cfg_;
    std::shared_ptr<Transport> transport_;
    std::mutex transport_mu_;
    detail::Semaphore sem_;
};

}  // namespace inoc

// The HTTP transport lives below the Gateway definition so that tests which
// never go online compile without caring about httplib specifics.
#include <httplib.h>

namespace inoc {

class HttplibTransport : public Transport {
public:
    HttplibTransport(const std::string& base_url, std::string api_key,
                     const GatewayConfig& cfg)
        : api_key_(std::move(api_key)) {
        const auto scheme_end = base_url.find("://");
        std::string rest =
            scheme_end == std::string::npos ? base_url : base_url.substr(scheme_end + 3);
        const std::string scheme =
            scheme_end == std::string::npos ? "http" : base_url.substr(0, scheme_end);
        const auto slash = rest.find('/');
        std::string host = rest.substr(0, slash);
        prefix_ = slash == std::string::npos ? "" : rest.substr(slash);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        client_ = std::make_unique<httplib::Client>((scheme + "://" + host).c_str());
        client_->set_connection_timeout(std::chrono::duration<double>(cfg.connect_timeout_s));
        client_->set_read_timeout(std::chrono::duration<double>(cfg.read_timeout_s));
    }

    HttpReply post(const std::string& path, const std::string& body) override {
        httplib::Headers headers{{"Authorization", "Bearer " + api_key_}};
        auto res = client_->Post((prefix_ + path).c_str(), headers, body, "application/json");
        if (!res) return HttpReply{0, httplib::to_string(res.error())};
        return HttpReply{res->status, res->body};
    }

private:
    std::string api_key_;
    std::string prefix_;
    std::unique_ptr<httplib::Client> client_;
};

inline std::shared_ptr<Transport> Gateway::transport() {
    std::lock_guard<std::mutex> lock(transport_mu_);
    if (!transport_)
        transport_ = std::make_shared<HttplibTransport>(cfg_.base_url, resolve_api_key(), cfg_);
    return transport_;
}

}  // namespace inoc
