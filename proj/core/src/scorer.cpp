#include "fasp/scorer.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "fasp/error.hpp"
#include "fasp/hashing.hpp"
#include "parallel.hpp"

namespace fasp {

ToxicityScore::ToxicityScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw InvalidArgumentError("toxicity score " + std::to_string(value) + " outside [0, 1]");
  }
}

std::vector<ToxicityScore> score_toxicity(const ToxicityScorer& scorer,
                                          std::span<const std::string> texts) {
  auto scores = scorer.score(texts);
  if (scores.size() != texts.size()) {
    throw ScorerProtocolError("scorer returned " + std::to_string(scores.size()) +
                              " scores for " + std::to_string(texts.size()) + " texts");
  }
  return scores;
}

// ---------------------------------------------------------------- lexicon

LexiconScorer::LexiconScorer(std::map<std::string, double> weights) : weights_(std::move(weights)) {
  for (const auto& [word, weight] : weights_) {
    if (!(weight >= 0.0 && weight <= 1.0)) {
      throw InvalidArgumentError("lexicon weight for '" + word + "' outside [0, 1]");
    }
  }
}

LexiconScorer LexiconScorer::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon " + path.string());
  std::map<std::string, double> weights;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw ParseError(line_no, "expected word<TAB>weight");
    double weight = 0.0;
    try {
      std::size_t used = 0;
      weight = std::stod(line.substr(tab + 1), &used);
      if (used != line.size() - tab - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw ParseError(line_no, "weight is not a number");
    }
    if (!(weight >= 0.0 && weight <= 1.0)) throw ParseError(line_no, "weight outside [0, 1]");
    std::string word = line.substr(0, tab);
    for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    weights[word] = weight;
  }
  return LexiconScorer(std::move(weights));
}

std::vector<std::string> LexiconScorer::words(std::string_view text) {
  const auto is_separator = [](unsigned char c) {
    return c < 0x80 && (std::isspace(c) || std::ispunct(c));
  };
  std::vector<std::string> out;
  std::string current;
  for (unsigned char c : text) {
    if (is_separator(c)) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

double LexiconScorer::score_one(std::string_view text) const {
  double keep = 1.0;
  for (const auto& w : words(text)) {
    auto it = weights_.find(w);
    if (it != weights_.end()) keep *= 1.0 - it->second;
  }
  return 1.0 - keep;
}

std::vector<ToxicityScore> LexiconScorer::score(std::span<const std::string> texts) const {
  std::vector<ToxicityScore> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.emplace_back(score_one(t));
  return out;
}

std::string LexiconScorer::fingerprint() const {
  nlohmann::json j = {{"kind", "lexicon"}, {"weights", weights_}};
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------- remote

RemoteScorer::RemoteScorer(RemoteScorerOptions options) : options_(std::move(options)) {
  const auto scheme_end = options_.url.find("://");
  if (scheme_end == std::string::npos) {
    throw InvalidArgumentError("scorer url must look like http://host:port[/prefix]");
  }
  const auto path_start = options_.url.find('/', scheme_end + 3);
  scheme_host_port_ = options_.url.substr(0, path_start);
  base_path_ = path_start == std::string::npos ? "" : options_.url.substr(path_start);
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
  if (options_.retries < 0) throw InvalidArgumentError("scorer retries must be >= 0");
  if (options_.concurrency_limit < 1) throw InvalidArgumentError("scorer concurrency must be >= 1");
  if (options_.batch_size == 0) throw InvalidArgumentError("scorer batch size must be >= 1");
}

std::string RemoteScorer::fingerprint() const {
  nlohmann::json j = {{"kind", "remote"}, {"url", options_.url}};
  return sha256_hex(j.dump());
}

std::vector<ToxicityScore> RemoteScorer::score_batch_once(std::span<const std::string> texts) const {
  httplib::Client client(scheme_host_port_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  const auto usecs =
      std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  const nlohmann::json request = {{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto body = request.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  auto res = client.Post(base_path_ + "/score", body, "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout ||
        err == httplib::Error::Write) {
      throw ScorerTimeoutError("scorer request timed out: " + httplib::to_string(err));
    }
    throw ScorerError("scorer request failed: " + httplib::to_string(err));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ScorerHttpError(res->status, "scorer returned HTTP " + std::to_string(res->status));
  }
  std::vector<double> raw;
  try {
    raw = nlohmann::json::parse(res->body).at("scores").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ScorerProtocolError(std::string("malformed scorer response: ") + e.what());
  }
  if (raw.size() != texts.size()) {
    throw ScorerProtocolError("scorer returned " + std::to_string(raw.size()) + " scores for " +
                              std::to_string(texts.size()) + " texts");
  }
  std::vector<ToxicityScore> out;
  out.reserve(raw.size());
  for (double v : raw) {
    if (!(v >= 0.0 && v <= 1.0)) throw ScorerProtocolError("scorer returned a score outside [0, 1]");
    out.emplace_back(v);
  }
  return out;
}

std::vector<ToxicityScore> RemoteScorer::score_batch(std::span<const std::string> texts) const {
  for (int attempt = 0;; ++attempt) {
    try {
      return score_batch_once(texts);
    } catch (const ScorerError&) {
      if (attempt >= options_.retries) throw;
    }
  }
}

std::vector<ToxicityScore> RemoteScorer::score(std::span<const std::string> texts) const {
  const std::size_t n_batches = (texts.size() + options_.batch_size - 1) / options_.batch_size;
  std::vector<std::vector<ToxicityScore>> batches(n_batches);
  detail::parallel_for(n_batches, options_.concurrency_limit, [&](std::size_t b) {
    const std::size_t begin = b * options_.batch_size;
    const std::size_t n = std::min(options_.batch_size, texts.size() - begin);
    batches[b] = score_batch(texts.subspan(begin, n));
  });
  std::vector<ToxicityScore> out;
  out.reserve(texts.size());
  for (auto& b : batches) out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace fasp
