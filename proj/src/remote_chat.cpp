// Chat-completion transport for remote agents. Speaks the common
// /v1/chat/completions shape: the prompt goes out as a single user message and
// the reply is read from choices[0].message.content.

#include <chrono>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mmeval/agents.hpp"
#include "mmeval/errors.hpp"
#include "mmeval/util.hpp"

namespace mmeval {
namespace {

using ordered_json = nlohmann::ordered_json;

struct ParsedEndpoint {
    std::string base;  // scheme://host[:port]
    std::string path;  // /v1/chat/completions etc.
    bool https = false;
};

ParsedEndpoint parse_endpoint(const std::string& url) {
    ParsedEndpoint out;
    std::string rest;
    if (url.rfind("http://", 0) == 0) {
        rest = url.substr(7);
    } else if (url.rfind("https://", 0) == 0) {
        rest = url.substr(8);
        out.https = true;
    } else {
        throw ConfigError("endpoint must start with http:// or https://: " + url);
    }
    const auto slash = rest.find('/');
    const std::string host = slash == std::string::npos ? rest : rest.substr(0, slash);
    if (host.empty()) throw ConfigError("endpoint has no host: " + url);
    out.base = (out.https ? "https://" : "http://") + host;
    out.path = slash == std::string::npos ? "/" : rest.substr(slash);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (out.https) throw ConfigError("built without TLS support; use an http:// endpoint");
#endif
    return out;
}

/// Spaces requests out to at most rpm per minute across worker threads.
class RateLimiter {
  public:
    explicit RateLimiter(double rpm) {
        if (rpm > 0)
            interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                std::chrono::duration<double>(60.0 / rpm));
    }

    void acquire() {
        if (interval_.count() == 0) return;
        std::chrono::steady_clock::time_point wake;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            const auto now = std::chrono::steady_clock::now();
            next_ = std::max(next_, now);
            wake = next_;
            next_ += interval_;
        }
        std::this_thread::sleep_until(wake);
    }

  private:
    std::chrono::steady_clock::duration interval_{0};
    std::chrono::steady_clock::time_point next_{};
    std::mutex mutex_;
};

class RemoteChatAgent final : public Agent {
  public:
    explicit RemoteChatAgent(AgentConfig cfg)
        : cfg_(std::move(cfg)), endpoint_(parse_endpoint(cfg_.endpoint)), limiter_(cfg_.rate_limit_rpm) {
        if (const char* key = std::getenv("MC_API_KEY")) api_key_ = key;
    }

    AgentResponse query(const PromptBundle& bundle, const Dilemma&) override {
        AgentResponse r;
        r.dilemma_id = bundle.dilemma_id;
        r.persona_id = bundle.persona_id;
        r.case1_side = bundle.case1_side;
        r.prompt_hash = prompt_digest(bundle.text);

        const std::string body = request_body(bundle.text);
        const auto start = std::chrono::steady_clock::now();
        std::string content;
        bool ok = false;
        int attempt = 0;
        for (; attempt < cfg_.retry.max_attempts; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(cfg_.retry.backoff * (1LL << (attempt - 1)));
            limiter_.acquire();
            if (post_once(body, content)) {
                ok = true;
                ++attempt;
                break;
            }
        }
        const auto elapsed = std::chrono::steady_clock::now() - start;
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        r.attempt_count = attempt;
        r.timestamp = iso8601_utc_now();
        if (ok) {
            r.raw_text = content;
            r.verdict = parse_response(content);
        } else {
            r.raw_text = "";
            r.verdict = Verdict::invalid(InvalidReason::TransportError);
        }
        return r;
    }

  private:
    std::string request_body(const std::string& prompt) const {
        ordered_json body;
        body["model"] = cfg_.model_name;
        body["messages"] = ordered_json::array({{{"role", "user"}, {"content", prompt}}});
        body["temperature"] = cfg_.sampling.temperature;
        body["top_p"] = cfg_.sampling.top_p;
        if (cfg_.sampling.top_k) body["top_k"] = *cfg_.sampling.top_k;
        if (cfg_.sampling.max_length) body["max_tokens"] = *cfg_.sampling.max_length;
        return body.dump();
    }

    // One POST; fills `content` and returns true on a usable completion.
    bool post_once(const std::string& body, std::string& content) {
        httplib::Client client(endpoint_.base);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) {
            const std::string value =
                cfg_.api_key_header == "Authorization" ? "Bearer " + api_key_ : api_key_;
            headers.emplace(cfg_.api_key_header, value);
        }
        auto res = client.Post(endpoint_.path, headers, body, "application/json");
        if (!res || res->status < 200 || res->status >= 300) return false;
        try {
            const auto j = nlohmann::json::parse(res->body);
            content = j.at("choices").at(0).at("message").at("content").get<std::string>();
            return true;
        } catch (const nlohmann::json::exception&) {
            return false;  // malformed completion; retried like a transport fault
        }
    }

    AgentConfig cfg_;
    ParsedEndpoint endpoint_;
    RateLimiter limiter_;
    std::string api_key_;
};

}  // namespace

namespace detail {

std::unique_ptr<Agent> make_remote_chat_agent(const AgentConfig& cfg) {
    return std::make_unique<RemoteChatAgent>(cfg);
}

}  // namespace detail
}  // namespace mmeval
