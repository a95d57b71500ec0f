#pragma once

// Chat-completion client for the video descriptor: request assembly, retries
// with exponential backoff, token cost accounting and batch dispatch.

#include <atomic>
#include <chrono>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "iclv/error.hpp"
#include "iclv/lvd.hpp"

namespace iclv::lvd {

struct AuthError : Error {
  using Error::Error;
};
struct RateLimitError : Error {
  using Error::Error;
};
struct TransportError : Error {
  using Error::Error;
};
/// Malformed or rejected API response.
struct ResponseError : Error {
  using Error::Error;
};
struct BudgetExceeded : Error {
  using Error::Error;
};

using Headers = std::vector<std::pair<std::string, std::string>>;

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
public:
  virtual ~Transport() = default;
  /// Throws TransportError when no HTTP response was obtained.
  virtual HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) = 0;
};

class HttpTransport : public Transport {
public:
  explicit HttpTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}
  HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) override;

private:
  std::chrono::seconds timeout_;
};

/// Scripted transport for tests and offline runs. Queued responses are
/// served first; afterwards the handler (if any) answers. Thread-safe.
class MockTransport : public Transport {
public:
  using Handler = std::function<HttpResponse(const std::string& body)>;

  MockTransport() = default;
  explicit MockTransport(Handler handler) : handler_(std::move(handler)) {}

  void push(HttpResponse r);
  void push_network_failure();
  HttpResponse post(const std::string& url, const Headers& headers, const std::string& body) override;

  std::vector<std::string> requests() const;
  std::size_t calls() const { return calls_; }

  /// Chat-completion response body carrying `text` and a usage block.
  static HttpResponse completion(const std::string& text, long long prompt_tokens = 1000,
                                 long long completion_tokens = 200);

private:
  mutable std::mutex mu_;
  std::deque<std::optional<HttpResponse>> queue_;  // nullopt: network failure
  Handler handler_;
  std::vector<std::string> requests_;
  std::atomic<std::size_t> calls_{0};
};

struct EncodedImage {
  std::string mime;
  std::string base64;
};

/// Reads and base64-encodes an image; the MIME type follows the extension.
EncodedImage encode_image_file(const std::string& path);

struct LvdRequest {
  std::string sequence_id;
  std::string prompt;
  std::vector<EncodedImage> images;
  std::string model;  ///< empty: the client's configured model
  int max_tokens = 800;

  /// Throws UsageError without images or prompt.
  void validate() const;
};

struct Usage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
};

struct Pricing {
  double prompt_per_1k = 0.0;      ///< currency per 1000 prompt tokens
  double completion_per_1k = 0.0;  ///< currency per 1000 completion tokens
  long long tokens_per_image = 765;
};

struct RetryPolicy {
  int max_retries = 4;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  std::chrono::milliseconds max_delay{30000};
};

struct ClientConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  RetryPolicy retry;
  Pricing pricing;
  std::optional<double> budget;  ///< abort before a call whose projected cost would exceed it
  std::size_t max_in_flight = 4;
};

struct DescribeResult {
  std::string sequence_id;
  std::string text;
  Usage usage;
  int retries = 0;
  double cost = 0.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

class LvdClient {
public:
  LvdClient(Transport& transport, ClientConfig config, Sleeper sleeper = {});

  /// JSON body of a chat-completion call: prompt text then images as data URLs.
  std::string build_body(const LvdRequest& req) const;
  /// Upper-bound cost of one call, from a characters/4 token estimate.
  double projected_cost(const LvdRequest& req) const;
  double cost_of(const Usage& u) const;

  DescribeResult describe(const LvdRequest& req);
  /// Results in request order. At most max_in_flight calls run at once; after
  /// the first failure no new calls start and the earliest error is rethrown.
  std::vector<DescribeResult> describe_batch(const std::vector<LvdRequest>& reqs);

  double spent() const;
  Usage total_usage() const;
  std::vector<std::string> log() const;
  const ClientConfig& config() const { return config_; }

private:
  void note(std::string line);

  Transport& transport_;
  ClientConfig config_;
  Sleeper sleeper_;
  mutable std::mutex mu_;
  double spent_ = 0.0;
  double reserved_ = 0.0;
  Usage usage_;
  std::vector<std::string> log_;
};

struct ConsistencyReport {
  std::size_t runs = 0;
  std::size_t parsed = 0;
  /// Share of parsed runs agreeing with the most common value, per field.
  std::map<std::string, double> agreement;
  double mean_agreement = 0.0;
};

/// Sends the same request k times and measures per-field agreement.
ConsistencyReport consistency_check(LvdClient& client, const LvdRequest& req, std::size_t k,
                                    const ParseOptions& options = {});

}  // namespace iclv::lvd
