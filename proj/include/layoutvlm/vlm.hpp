#pragma once

// Chat-completions client with multimodal messages and a record/replay cache,
// plus the two generation calls built on it: grouping assets and proposing a
// scene program for one group.
//
// Environment: LAYOUTVLM_API_BASE (e.g. https://api.openai.com/v1),
// LAYOUTVLM_API_KEY, LAYOUTVLM_MODEL.

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "layoutvlm/dsl.hpp"
#include "layoutvlm/render_png.hpp"
#include "layoutvlm/scene.hpp"

#ifndef LAYOUTVLM_PROMPT_DIR
#define LAYOUTVLM_PROMPT_DIR "prompts"
#endif

namespace layoutvlm {

struct ContentPart {
  enum class Kind { kText, kImage };
  Kind kind = Kind::kText;
  std::string text;        // text parts
  std::string bytes;       // image parts
  std::string media_type;  // image parts, e.g. image/png

  static ContentPart make_text(std::string t) { return {Kind::kText, std::move(t), {}, {}}; }
  static ContentPart make_image(std::string data, std::string type) {
    return {Kind::kImage, {}, std::move(data), std::move(type)};
  }
};

struct ChatMessage {
  std::string role;
  std::vector<ContentPart> parts;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;

  void validate() const {
    if (messages.empty()) throw Error("chat request needs at least one message");
    for (const auto& m : messages) {
      for (const auto& p : m.parts) {
        if (p.kind == ContentPart::Kind::kImage && p.bytes.empty()) {
          throw Error("chat request contains an empty image");
        }
      }
    }
  }
};

enum class Mode { kLive, kRecord, kReplay };

inline std::optional<Mode> parse_mode(std::string_view s) {
  if (s == "live") return Mode::kLive;
  if (s == "record") return Mode::kRecord;
  if (s == "replay") return Mode::kReplay;
  return std::nullopt;
}

struct ReplayMode {
  Mode mode = Mode::kReplay;
  std::filesystem::path cache_dir;
};

struct EndpointConfig {
  std::string api_base;
  std::string api_key;
  std::string model = "gpt-4o";

  static EndpointConfig from_env() {
    EndpointConfig cfg;
    if (const char* v = std::getenv("LAYOUTVLM_API_BASE")) cfg.api_base = v;
    if (const char* v = std::getenv("LAYOUTVLM_API_KEY")) cfg.api_key = v;
    if (const char* v = std::getenv("LAYOUTVLM_MODEL"); v && *v) cfg.model = v;
    return cfg;
  }
};

struct ClientOptions {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{1000};  // doubles on each retry
  std::chrono::seconds timeout{180};
};

class CacheMiss : public Error {
 public:
  explicit CacheMiss(const std::string& digest)
      : Error("replay cache has no entry for request " + digest), digest_(digest) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

class HttpError : public Error {
 public:
  HttpError(const std::string& what, int status, bool retryable)
      : Error(what), status_(status), retryable_(retryable) {}
  int status() const { return status_; }
  bool retryable() const { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

// ---------------------------------------------------------------------------
// Hashing and encoding (OpenSSL)

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

inline std::string base64_encode(std::string_view data) {
  std::string out(4 * ((data.size() + 2) / 3) + 1, '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(data.data()),
                                static_cast<int>(data.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

/// Field-ordered description of a request; images are represented by the
/// SHA-256 of their bytes. The digest of its compact dump keys the cache.
inline nlohmann::json canonical_request(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json parts = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::kText) {
        parts.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        parts.push_back({{"type", "image"}, {"media_type", p.media_type}, {"sha256", sha256_hex(p.bytes)}});
      }
    }
    messages.push_back({{"role", m.role}, {"parts", std::move(parts)}});
  }
  return {{"model", req.model}, {"temperature", req.temperature}, {"messages", std::move(messages)}};
}

inline std::string request_digest(const ChatRequest& req) {
  return sha256_hex(canonical_request(req).dump());
}

/// OpenAI-style chat-completions body; images become base64 data URLs.
inline nlohmann::json wire_request(const ChatRequest& req) {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : req.messages) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::kText) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + p.media_type + ";base64," + base64_encode(p.bytes)}}}});
      }
    }
    messages.push_back({{"role", m.role}, {"content", std::move(content)}});
  }
  return {{"model", req.model}, {"temperature", req.temperature}, {"messages", std::move(messages)}};
}

// ---------------------------------------------------------------------------
// Replay cache: one JSON file per request digest.

struct CacheEntry {
  std::string digest;
  std::string model;
  std::string timestamp;
  std::size_t response_bytes = 0;
};

class ReplayCache {
 public:
  explicit ReplayCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path path_for(const std::string& digest) const { return dir_ / (digest + ".json"); }

  std::optional<std::string> lookup(const std::string& digest) const {
    const auto path = path_for(digest);
    if (!std::filesystem::exists(path)) return std::nullopt;
    const auto j = nlohmann::json::parse(read_text_file(path.string()));
    return j.at("response").get<std::string>();
  }

  /// Writes to a unique temporary file and renames it into place, so a
  /// concurrent reader sees either nothing or a complete entry.
  void store(const std::string& digest, const nlohmann::json& request, const std::string& response) const {
    std::filesystem::create_directories(dir_);
    static std::atomic<unsigned long> counter{0};
    const auto tmp = dir_ / (digest + ".tmp." + std::to_string(::getpid()) + "." +
                             std::to_string(counter.fetch_add(1)) + "." +
                             std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
    const nlohmann::json entry = {{"request", request}, {"response", response}, {"timestamp", utc_now()}};
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw Error("cannot write cache entry " + tmp.string());
      out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path_for(digest));
  }

  std::vector<CacheEntry> list() const {
    std::vector<CacheEntry> out;
    if (!std::filesystem::is_directory(dir_)) return out;
    for (const auto& f : std::filesystem::directory_iterator(dir_)) {
      if (f.path().extension() != ".json") continue;
      try {
        const auto j = nlohmann::json::parse(read_text_file(f.path().string()));
        out.push_back({f.path().stem().string(), j.at("request").value("model", ""), j.value("timestamp", ""),
                       j.at("response").get<std::string>().size()});
      } catch (const std::exception&) {
        continue;
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.digest < b.digest; });
    return out;
  }

 private:
  static std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Client

namespace detail {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;    // without trailing slash
};

inline ParsedUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("LAYOUTVLM_API_BASE must be an absolute URL: '" + url + "'");
  const auto slash = url.find('/', scheme + 3);
  ParsedUrl out;
  out.origin = url.substr(0, slash);
  out.path = slash == std::string::npos ? "" : url.substr(slash);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

inline bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace detail

class VlmClient {
 public:
  VlmClient(EndpointConfig endpoint, ReplayMode mode, ClientOptions options = {})
      : endpoint_(std::move(endpoint)), mode_(std::move(mode)), options_(options), cache_(mode_.cache_dir) {
    if (mode_.mode == Mode::kReplay && !std::filesystem::is_directory(mode_.cache_dir)) {
      throw Error("replay cache directory '" + mode_.cache_dir.string() + "' does not exist");
    }
  }

  const EndpointConfig& endpoint() const { return endpoint_; }
  const ReplayMode& mode() const { return mode_; }

  /// Number of HTTP attempts made so far (including retries).
  std::size_t network_attempts() const { return attempts_.load(); }

  std::string complete(const ChatRequest& req) {
    req.validate();
    const std::string digest = request_digest(req);
    if (mode_.mode == Mode::kReplay) {
      if (auto hit = cache_.lookup(digest)) return *hit;
      throw CacheMiss(digest);
    }
    std::string response = post_with_retries(req);
    if (mode_.mode == Mode::kRecord) cache_.store(digest, canonical_request(req), response);
    return response;
  }

  /// Request template carrying the configured model and temperature 0.
  ChatRequest new_request() const { return ChatRequest{endpoint_.model, {}, 0.0}; }

 private:
  std::string post_with_retries(const ChatRequest& req) {
    if (endpoint_.api_base.empty()) {
      throw Error("no VLM endpoint configured (set LAYOUTVLM_API_BASE)");
    }
    const detail::ParsedUrl url = detail::split_url(endpoint_.api_base);
    const std::string body = wire_request(req).dump();
    for (int attempt = 0;; ++attempt) {
      try {
        return post_once(url, body);
      } catch (const HttpError& e) {
        if (!e.retryable() || attempt >= options_.max_retries) throw;
        std::this_thread::sleep_for(options_.backoff_base * (1 << attempt));
      }
    }
  }

  std::string post_once(const detail::ParsedUrl& url, const std::string& body) {
    attempts_.fetch_add(1);
    httplib::Client http(url.origin);
    http.set_connection_timeout(options_.timeout);
    http.set_read_timeout(options_.timeout);
    http.set_write_timeout(options_.timeout);
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
    auto res = http.Post(url.path + "/chat/completions", headers, body, "application/json");
    if (!res) {
      throw HttpError("VLM request failed: " + httplib::to_string(res.error()), 0, true);
    }
    if (res->status < 200 || res->status >= 300) {
      throw HttpError("VLM endpoint returned HTTP " + std::to_string(res->status), res->status,
                      detail::retryable_status(res->status));
    }
    try {
      const auto j = nlohmann::json::parse(res->body);
      return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
      throw HttpError(std::string("malformed chat-completions response: ") + e.what(), res->status, false);
    }
  }

  EndpointConfig endpoint_;
  ReplayMode mode_;
  ClientOptions options_;
  ReplayCache cache_;
  std::atomic<std::size_t> attempts_{0};
};

// ---------------------------------------------------------------------------
// Prompt templates

struct PromptLibrary {
  std::string grouping;
  std::string layout;
  std::string judge_position;
  std::string judge_rotation;
  std::string judge_psa;

  static PromptLibrary load(const std::filesystem::path& dir = LAYOUTVLM_PROMPT_DIR) {
    auto read = [&](const char* name) { return read_text_file((dir / name).string()); };
    return {read("grouping.txt"), read("layout.txt"), read("judge_position.txt"), read("judge_rotation.txt"),
            read("judge_psa.txt")};
  }
};

/// Replaces every `{{key}}` with its value.
inline std::string fill_template(std::string text, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    const std::string marker = "{{" + key + "}}";
    for (std::size_t pos = text.find(marker); pos != std::string::npos; pos = text.find(marker, pos + value.size())) {
      text.replace(pos, marker.size(), value);
    }
  }
  return text;
}

inline std::string describe_assets(const std::vector<AssetSpec>& assets) {
  std::ostringstream os;
  for (const auto& a : assets) {
    os << "- " << a.id << ": " << a.description << " (" << detail::fixed2(a.dims.x) << " x "
       << detail::fixed2(a.dims.y) << " x " << detail::fixed2(a.dims.z) << " m)\n";
  }
  return os.str();
}

inline std::string describe_placed(const SceneState& state) {
  if (state.assets.empty()) return "(none)\n";
  std::ostringstream os;
  for (const auto& a : state.assets) {
    os << "- " << a.spec.id << " at x=" << detail::fixed2(a.pose.x) << ", y=" << detail::fixed2(a.pose.y)
       << ", z=" << detail::fixed2(a.pose.z) << ", rotation=" << detail::fixed2(rad_to_deg(a.pose.theta))
       << "\n";
  }
  return os.str();
}

inline std::string describe_room(const Room& room) {
  return detail::fixed2(room.width) + " m (x) by " + detail::fixed2(room.depth) + " m (y), " +
         detail::fixed2(room.height) + " m high";
}

// ---------------------------------------------------------------------------
// Grouping

struct Grouping {
  std::vector<std::vector<std::string>> groups;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<nlohmann::json> find_json_array(const std::string& response) {
  const ProgramText block = extract_code_block(response);
  for (const std::string& candidate : {block.source, response}) {
    try {
      auto j = nlohmann::json::parse(candidate);
      if (j.is_array()) return j;
    } catch (const std::exception&) {
    }
    const auto first = candidate.find('[');
    const auto last = candidate.rfind(']');
    if (first != std::string::npos && last != std::string::npos && last > first) {
      try {
        auto j = nlohmann::json::parse(candidate.substr(first, last - first + 1));
        if (j.is_array()) return j;
      } catch (const std::exception&) {
      }
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// Repairs a proposed grouping into a partition of the inventory: unknown and
/// repeated ids are dropped, missing ids become trailing singleton groups.
/// An unusable response yields one group holding everything.
inline Grouping parse_grouping(const std::string& response, const Inventory& inventory) {
  Grouping out;
  std::set<std::string> known;
  for (const auto& a : inventory) known.insert(a.id);

  const auto parsed = detail::find_json_array(response);
  bool usable = parsed.has_value();
  if (usable) {
    for (const auto& g : *parsed) {
      if (!g.is_array()) {
        usable = false;
        break;
      }
    }
  }
  if (!usable) {
    out.warnings.push_back("grouping response could not be parsed; using a single group");
    out.groups.emplace_back();
    for (const auto& a : inventory) out.groups.back().push_back(a.id);
    return out;
  }

  std::set<std::string> seen;
  for (const auto& g : *parsed) {
    std::vector<std::string> group;
    for (const auto& v : g) {
      if (!v.is_string()) {
        out.warnings.push_back("ignoring non-string group member " + v.dump());
        continue;
      }
      const std::string id = v.get<std::string>();
      if (!known.count(id)) {
        out.warnings.push_back("ignoring unknown asset '" + id + "' in grouping");
        continue;
      }
      if (!seen.insert(id).second) {
        out.warnings.push_back("asset '" + id + "' appears in several groups; keeping the first");
        continue;
      }
      group.push_back(id);
    }
    if (!group.empty()) out.groups.push_back(std::move(group));
  }
  for (const auto& a : inventory) {
    if (!seen.count(a.id)) {
      out.warnings.push_back("asset '" + a.id + "' missing from grouping; placed in its own group");
      out.groups.push_back({a.id});
    }
  }
  return out;
}

inline Grouping group_assets(const Inventory& inventory, const std::string& instruction, VlmClient& client,
                             const PromptLibrary& prompts) {
  if (inventory.empty()) throw Error("group_assets: inventory is empty");
  ChatRequest req = client.new_request();
  req.messages.push_back(
      {"user", {ContentPart::make_text(fill_template(
                   prompts.grouping, {{"instruction", instruction}, {"assets", describe_assets(inventory)}}))}});
  return parse_grouping(client.complete(req), inventory);
}

// ---------------------------------------------------------------------------
// Layout proposal

/// The exact request sent for one group: the layout template as the system
/// prompt, then the instruction, a render of the current scene and a panel of
/// the group's assets.
inline ChatRequest layout_request(const SceneState& state, const std::vector<AssetSpec>& group,
                                  const std::string& instruction, const VlmClient& client,
                                  const PromptLibrary& prompts, RenderOptions opts = {}) {
  if (group.empty()) throw Error("propose_layout: group is empty");
  for (const auto& a : group) {
    if (state.find(a.id)) throw Error("propose_layout: '" + a.id + "' is already placed");
  }
  opts.format = ImageFormat::kPng;
  ChatRequest req = client.new_request();
  req.messages.push_back({"system",
                          {ContentPart::make_text(fill_template(prompts.layout, {{"room", describe_room(state.room)},
                                                                                 {"assets", describe_assets(group)},
                                                                                 {"placed", describe_placed(state)}}))}});
  req.messages.push_back({"user",
                          {ContentPart::make_text(instruction),
                           ContentPart::make_image(render_topdown(state, opts), media_type(opts.format)),
                           ContentPart::make_image(render_asset_panel(group, opts), media_type(opts.format))}});
  return req;
}

inline ProgramText propose_layout(const SceneState& state, const std::vector<AssetSpec>& group,
                                  const std::string& instruction, VlmClient& client, const PromptLibrary& prompts,
                                  const RenderOptions& opts = {}) {
  return extract_code_block(client.complete(layout_request(state, group, instruction, client, prompts, opts)));
}

}  // namespace layoutvlm
