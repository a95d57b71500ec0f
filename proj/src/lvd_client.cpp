#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "iclv/lvd_client.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "iclv/text.hpp"

namespace iclv::lvd {

namespace {

using json = nlohmann::json;

std::string mime_for(const std::string& path) {
  const auto ext = text::to_lower(std::filesystem::path(path).extension().string());
  if (ext == ".png") return "image/png";
  if (ext == ".webp") return "image/webp";
  if (ext == ".gif") return "image/gif";
  return "image/jpeg";
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

HttpResponse HttpTransport::post(const std::string& url, const Headers& headers, const std::string& body) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("endpoint '" + url + "' lacks a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  const auto origin = url.substr(0, path_start);
  const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

  httplib::Client client(origin);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  auto res = client.Post(path, h, body, "application/json");
  if (!res) throw TransportError("request to " + origin + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

void MockTransport::push(HttpResponse r) {
  std::lock_guard lock(mu_);
  queue_.emplace_back(std::move(r));
}

void MockTransport::push_network_failure() {
  std::lock_guard lock(mu_);
  queue_.emplace_back(std::nullopt);
}

HttpResponse MockTransport::post(const std::string&, const Headers&, const std::string& body) {
  std::optional<HttpResponse> next;
  bool from_queue = false;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    requests_.push_back(body);
    if (!queue_.empty()) {
      next = std::move(queue_.front());
      queue_.pop_front();
      from_queue = true;
    }
  }
  if (from_queue) {
    if (!next) throw TransportError("simulated network failure");
    return *next;
  }
  if (handler_) return handler_(body);
  throw TransportError("mock transport has no scripted response");
}

std::vector<std::string> MockTransport::requests() const {
  std::lock_guard lock(mu_);
  return requests_;
}

HttpResponse MockTransport::completion(const std::string& text, long long prompt_tokens, long long completion_tokens) {
  json j;
  j["object"] = "chat.completion";
  j["choices"] = json::array({{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}}});
  j["usage"] = {{"prompt_tokens", prompt_tokens},
                {"completion_tokens", completion_tokens},
                {"total_tokens", prompt_tokens + completion_tokens}};
  return {200, j.dump()};
}

EncodedImage encode_image_file(const std::string& path) {
  const auto bytes = text::read_file(path);
  return {mime_for(path), httplib::detail::base64_encode(bytes)};
}

void LvdRequest::validate() const {
  if (prompt.empty()) throw UsageError("descriptor request '" + sequence_id + "' has an empty prompt");
  if (images.empty()) throw UsageError("descriptor request '" + sequence_id + "' has no images");
}

LvdClient::LvdClient(Transport& transport, ClientConfig config, Sleeper sleeper)
    : transport_(transport), config_(std::move(config)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  if (config_.max_in_flight == 0) throw UsageError("max_in_flight must be at least 1");
}

std::string LvdClient::build_body(const LvdRequest& req) const {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", req.prompt}});
  for (const auto& img : req.images)
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", "data:" + img.mime + ";base64," + img.base64}}}});
  json body;
  body["model"] = req.model.empty() ? config_.model : req.model;
  body["messages"] = json::array({{{"role", "user"}, {"content", content}}});
  body["max_tokens"] = req.max_tokens;
  body["temperature"] = 0;
  return body.dump();
}

double LvdClient::cost_of(const Usage& u) const {
  return static_cast<double>(u.prompt_tokens) / 1000.0 * config_.pricing.prompt_per_1k +
         static_cast<double>(u.completion_tokens) / 1000.0 * config_.pricing.completion_per_1k;
}

double LvdClient::projected_cost(const LvdRequest& req) const {
  Usage u;
  u.prompt_tokens = static_cast<long long>(std::ceil(static_cast<double>(req.prompt.size()) / 4.0)) +
                    config_.pricing.tokens_per_image * static_cast<long long>(req.images.size());
  u.completion_tokens = req.max_tokens;
  return cost_of(u);
}

void LvdClient::note(std::string line) {
  std::lock_guard lock(mu_);
  log_.push_back(std::move(line));
}

DescribeResult LvdClient::describe(const LvdRequest& req) {
  req.validate();
  const double projection = projected_cost(req);
  {
    std::lock_guard lock(mu_);
    if (config_.budget && spent_ + reserved_ + projection > *config_.budget)
      throw BudgetExceeded("sequence '" + req.sequence_id + "': projected cost " + text::format_double(projection) +
                           " would exceed the budget (spent " + text::format_double(spent_) + " of " +
                           text::format_double(*config_.budget) + ")");
    reserved_ += projection;
  }
  const auto release = [&] {
    std::lock_guard lock(mu_);
    reserved_ -= projection;
  };

  Headers headers{{"Content-Type", "application/json"}};
  if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key)
    headers.emplace_back("Authorization", std::string("Bearer ") + key);
  const auto body = build_body(req);

  DescribeResult out;
  out.sequence_id = req.sequence_id;
  auto delay = config_.retry.base_delay;
  for (int attempt = 0;; ++attempt) {
    std::string reason;
    bool rate_limited = false;
    try {
      const auto res = transport_.post(config_.endpoint, headers, body);
      if (res.status == 401 || res.status == 403) {
        release();
        throw AuthError("sequence '" + req.sequence_id + "': authentication failed (HTTP " +
                        std::to_string(res.status) + ")");
      }
      if (res.status >= 200 && res.status < 300) {
        json j;
        try {
          j = json::parse(res.body);
          out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
          release();
          throw ResponseError("sequence '" + req.sequence_id + "': malformed response: " + e.what());
        }
        if (j.contains("usage") && j["usage"].is_object()) {
          out.usage.prompt_tokens = j["usage"].value("prompt_tokens", 0LL);
          out.usage.completion_tokens = j["usage"].value("completion_tokens", 0LL);
        } else {
          note("sequence '" + req.sequence_id + "': response has no usage block");
        }
        break;
      }
      if (!retryable_status(res.status)) {
        release();
        throw ResponseError("sequence '" + req.sequence_id + "': HTTP " + std::to_string(res.status) + ": " +
                            res.body.substr(0, 200));
      }
      rate_limited = res.status == 429;
      reason = "HTTP " + std::to_string(res.status);
    } catch (const TransportError& e) {
      reason = e.what();
    }
    if (attempt >= config_.retry.max_retries) {
      release();
      const auto msg = "sequence '" + req.sequence_id + "': giving up after " + std::to_string(attempt) +
                       " retries (" + reason + ")";
      if (rate_limited) throw RateLimitError(msg);
      throw TransportError(msg);
    }
    ++out.retries;
    note("sequence '" + req.sequence_id + "': retry " + std::to_string(out.retries) + " after " + reason);
    sleeper_(delay);
    delay = std::min(config_.retry.max_delay,
                     std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) *
                                                                      config_.retry.factor)));
  }

  out.cost = cost_of(out.usage);
  std::lock_guard lock(mu_);
  reserved_ -= projection;
  spent_ += out.cost;
  usage_.prompt_tokens += out.usage.prompt_tokens;
  usage_.completion_tokens += out.usage.completion_tokens;
  return out;
}

std::vector<DescribeResult> LvdClient::describe_batch(const std::vector<LvdRequest>& reqs) {
  std::vector<DescribeResult> results(reqs.size());
  std::vector<std::exception_ptr> errors(reqs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  const auto worker = [&] {
    for (;;) {
      if (stop) return;
      const std::size_t i = next++;
      if (i >= reqs.size()) return;
      try {
        results[i] = describe(reqs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
        stop = true;
      }
    }
  };
  const auto n = std::min(config_.max_in_flight, reqs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

double LvdClient::spent() const {
  std::lock_guard lock(mu_);
  return spent_;
}

Usage LvdClient::total_usage() const {
  std::lock_guard lock(mu_);
  return usage_;
}

std::vector<std::string> LvdClient::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

ConsistencyReport consistency_check(LvdClient& client, const LvdRequest& req, std::size_t k,
                                    const ParseOptions& options) {
  ConsistencyReport rep;
  rep.runs = k;
  std::vector<LvdRecord> records;
  for (std::size_t i = 0; i < k; ++i) {
    const auto res = client.describe(req);
    auto parsed = parse_response(res.text, options);
    if (parsed.record) records.push_back(std::move(*parsed.record));
  }
  rep.parsed = records.size();
  if (records.empty()) return rep;
  double sum = 0.0;
  for (const auto& field : field_names()) {
    if (field == "stress_description") continue;
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records) ++counts[field_value(r, field)];
    std::size_t mode = 0;
    for (const auto& [v, c] : counts) mode = std::max(mode, c);
    const double a = static_cast<double>(mode) / static_cast<double>(records.size());
    rep.agreement[field] = a;
    sum += a;
  }
  rep.mean_agreement = sum / static_cast<double>(rep.agreement.size());
  return rep;
}

}  // namespace iclv::lvd
