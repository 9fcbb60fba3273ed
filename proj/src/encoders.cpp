#include "ragar/encoders.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace ragar {

using nlohmann::json;

Vec token_vector(const std::string& token, int dim, uint64_t table_seed) {
  if (dim < 1) throw std::invalid_argument("token_vector: dim must be positive");
  Rng rng = Rng(table_seed).split(Rng::fnv1a(token));
  Vec v(dim);
  for (auto& x : v) x = rng.uniform_signed();
  return v;
}

SemanticEncoder::SemanticEncoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.dim < 1) throw std::invalid_argument("SemanticEncoder: dim must be positive");
}

bool SemanticEncoder::is_stopword(const std::string& token) const {
  return std::find(cfg_.stopwords.begin(), cfg_.stopwords.end(), token) != cfg_.stopwords.end();
}

SemanticEmbedding SemanticEncoder::encode(const std::vector<std::string>& caption,
                                          const std::string& source_item) const {
  Vec sum(cfg_.dim, 0.0);
  int kept = 0;
  for (const auto& tok : caption) {
    if (tok.empty() || is_stopword(tok)) continue;
    axpy(sum, 1.0, token_vector(tok, cfg_.dim, cfg_.token_table_seed));
    ++kept;
  }
  if (kept == 0) {
    throw std::domain_error("encode: caption empty after stopword filtering" +
                            (source_item.empty() ? "" : " (item " + source_item + ")"));
  }
  return SemanticEmbedding{normalized(sum), source_item};
}

std::vector<std::string> KeywordSet::filtered_tokens() const {
  std::vector<std::string> out;
  out.reserve(filtered.size());
  for (const auto& [kw, count] : filtered) out.push_back(kw);
  return out;
}

namespace {

std::vector<std::string> dedup_keywords(const std::vector<std::string>& tokens,
                                        const std::vector<std::string>& stopwords) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& tok : tokens) {
    if (tok.empty()) continue;
    if (std::find(stopwords.begin(), stopwords.end(), tok) != stopwords.end()) continue;
    if (seen.insert(tok).second) out.push_back(tok);
  }
  return out;
}

KeywordSet finish_keyword_set(std::map<std::string, std::vector<std::string>> per_item,
                              const KeywordExtractorConfig& cfg) {
  std::map<std::string, int> counts;
  for (const auto& [id, kws] : per_item) {
    for (const auto& kw : kws) ++counts[kw];
  }
  std::vector<std::pair<std::string, int>> ranked;
  for (const auto& [kw, count] : counts) {
    if (count >= cfg.min_count) ranked.emplace_back(kw, count);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(ranked.size()) > cfg.top_n) ranked.resize(cfg.top_n);
  KeywordSet set;
  set.per_item = std::move(per_item);
  set.filtered = std::move(ranked);
  return set;
}

std::map<std::string, std::vector<std::string>> deterministic_per_item(
    const std::vector<const Item*>& items, const KeywordExtractorConfig& cfg) {
  std::map<std::string, std::vector<std::string>> per_item;
  for (const Item* it : items) {
    std::vector<std::string> all = it->caption;
    all.insert(all.end(), it->text.begin(), it->text.end());
    per_item[it->item_id] = dedup_keywords(all, cfg.stopwords);
  }
  return per_item;
}

struct ParsedUrl {
  std::string host_port;  // scheme://host:port
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("endpoint url needs a scheme: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::map<std::string, std::vector<std::string>> external_per_item(
    const std::vector<const Item*>& items, const KeywordExtractorConfig& cfg) {
  const ParsedUrl url = split_url(cfg.endpoint_url);
  const int batch = std::max(1, cfg.batch_size);
  const int n_chunks = (static_cast<int>(items.size()) + batch - 1) / batch;
  std::vector<std::vector<std::vector<std::string>>> chunk_results(n_chunks);
  std::vector<std::string> chunk_errors(n_chunks);
  std::atomic<int> next_chunk{0};

  auto worker = [&]() {
    for (;;) {
      const int chunk = next_chunk.fetch_add(1);
      if (chunk >= n_chunks) return;
      const int begin = chunk * batch;
      const int end = std::min<int>(begin + batch, static_cast<int>(items.size()));
      json body;
      body["texts"] = json::array();
      for (int i = begin; i < end; ++i) {
        std::string text;
        for (const auto& tok : items[i]->caption) text += tok + " ";
        for (const auto& tok : items[i]->text) text += tok + " ";
        if (!text.empty()) text.pop_back();
        body["texts"].push_back(text);
      }
      int attempts = 0;
      std::string last_error;
      for (int attempt = 0; attempt <= cfg.retries; ++attempt) {
        ++attempts;
        if (attempt > 0) {
          std::this_thread::sleep_for(std::chrono::milliseconds(50 << (attempt - 1)));
        }
        httplib::Client client(url.host_port);
        client.set_connection_timeout(0, cfg.timeout_ms * 1000);
        client.set_read_timeout(0, cfg.timeout_ms * 1000);
        auto res = client.Post(url.path, body.dump(), "application/json");
        if (!res || res->status != 200) {
          last_error = "endpoint unreachable or non-200 after " + std::to_string(attempts) +
                       " attempt(s): " + cfg.endpoint_url;
          continue;
        }
        try {
          json parsed = json::parse(res->body);
          const auto& kw = parsed.at("keywords");
          if (!kw.is_array() || static_cast<int>(kw.size()) != end - begin) {
            throw std::runtime_error("keyword array size mismatch");
          }
          std::vector<std::vector<std::string>> result;
          for (const auto& lst : kw) result.push_back(lst.get<std::vector<std::string>>());
          chunk_results[chunk] = std::move(result);
          last_error.clear();
          break;
        } catch (const std::exception& e) {
          // Malformed payloads are not retried: the server answered, the
          // contract is broken.
          chunk_errors[chunk] = std::string("malformed endpoint response: ") + e.what();
          return;
        }
      }
      if (!last_error.empty()) {
        chunk_errors[chunk] = last_error + "#attempts=" + std::to_string(attempts);
      }
    }
  };

  std::vector<std::thread> threads;
  const int n_threads = std::max(1, std::min(cfg.max_inflight, n_chunks));
  for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();

  for (int chunk = 0; chunk < n_chunks; ++chunk) {
    if (!chunk_errors[chunk].empty()) {
      const auto& msg = chunk_errors[chunk];
      const auto marker = msg.find("#attempts=");
      if (marker != std::string::npos) {
        throw EndpointError(msg.substr(0, marker), std::stoi(msg.substr(marker + 10)));
      }
      throw std::runtime_error(msg);
    }
  }

  std::map<std::string, std::vector<std::string>> per_item;
  for (int chunk = 0; chunk < n_chunks; ++chunk) {
    const int begin = chunk * batch;
    for (size_t i = 0; i < chunk_results[chunk].size(); ++i) {
      per_item[items[begin + i]->item_id] =
          dedup_keywords(chunk_results[chunk][i], cfg.stopwords);
    }
  }
  return per_item;
}

}  // namespace

KeywordSet extract_keywords(const std::vector<const Item*>& items,
                            const KeywordExtractorConfig& cfg) {
  if (items.empty()) throw std::domain_error("extract_keywords: no items");
  if (cfg.min_count < 1 || cfg.top_n < 1) {
    throw std::invalid_argument("extract_keywords: min_count and top_n must be >= 1");
  }
  if (cfg.mode == KeywordExtractorConfig::Mode::kDeterministic) {
    return finish_keyword_set(deterministic_per_item(items, cfg), cfg);
  }
  if (cfg.endpoint_url.empty()) {
    throw std::invalid_argument("extract_keywords: external mode requires endpoint_url");
  }
  try {
    return finish_keyword_set(external_per_item(items, cfg), cfg);
  } catch (const std::exception&) {
    if (!cfg.fallback_to_deterministic) throw;
    return finish_keyword_set(deterministic_per_item(items, cfg), cfg);
  }
}

std::vector<std::string> load_stopword_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open stopword file: " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

}  // namespace ragar
