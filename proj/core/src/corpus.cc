#include "spanlab/corpus.h"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace spanlab {

static_assert(std::endian::native == std::endian::little,
              "embedding sidecars are read as little-endian float32");

namespace {

using nlohmann::json;

constexpr char kMagic[6] = {'S', 'W', 'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 6 + 1 + 4 + 8;

std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> classes)
    : classes_(std::move(classes)) {
  if (classes_.empty()) {
    throw std::invalid_argument("label set needs at least one class");
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : classes_) {
    if (c.empty()) throw std::invalid_argument("empty class name");
    if (c == kBackground || c == kAbstainName) {
      throw std::invalid_argument("reserved class name: " + c);
    }
    if (!seen.insert(c).second) {
      throw std::invalid_argument("duplicate class name: " + c);
    }
  }
}

const std::string& LabelSet::name(int code) const {
  if (code == background()) return background_name_;
  if (code < 0 || code > background()) {
    throw std::out_of_range("label code out of range: " + std::to_string(code));
  }
  return classes_[static_cast<std::size_t>(code)];
}

std::optional<int> LabelSet::code(std::string_view name) const {
  if (name == kBackground) return background();
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

const char* SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

std::optional<Split> ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

const char* ChannelName(Channel channel) {
  switch (channel) {
    case Channel::kEmbA: return "emb_a";
    case Channel::kEmbB: return "emb_b";
    case Channel::kSent: return "sent";
  }
  return "emb_a";
}

std::optional<Channel> ParseChannel(std::string_view name) {
  if (name == "emb_a") return Channel::kEmbA;
  if (name == "emb_b") return Channel::kEmbB;
  if (name == "sent") return Channel::kSent;
  return std::nullopt;
}

EmbeddingStore::EmbeddingStore(Channel channel, std::size_t dim,
                               std::vector<float> data)
    : channel_(channel), dim_(dim), data_(std::move(data)) {
  if (dim_ == 0) throw std::invalid_argument("embedding dim must be positive");
  if (data_.size() % dim_ != 0) {
    throw std::invalid_argument("embedding data is not a multiple of dim");
  }
  for (std::size_t r = 0; r < rows(); ++r) {
    float* p = data_.data() + r * dim_;
    double norm = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) {
      if (!std::isfinite(p[k])) {
        throw std::invalid_argument("non-finite value in row " +
                                    std::to_string(r));
      }
      norm += static_cast<double>(p[k]) * p[k];
    }
    if (norm == 0.0) {
      throw std::invalid_argument("zero vector in row " + std::to_string(r));
    }
    const double inv = 1.0 / std::sqrt(norm);
    for (std::size_t k = 0; k < dim_; ++k) {
      p[k] = static_cast<float>(p[k] * inv);
    }
  }
}

double EmbeddingStore::similarity(std::size_t a, std::size_t b) const {
  const float* x = data_.data() + a * dim_;
  const float* y = data_.data() + b * dim_;
  double dot = 0.0;
  for (std::size_t k = 0; k < dim_; ++k) dot += static_cast<double>(x[k]) * y[k];
  return dot;
}

IngestError::IngestError(std::string path, std::uint64_t offset,
                         const std::string& what)
    : std::runtime_error(path + " @" + std::to_string(offset) + ": " + what),
      path_(std::move(path)),
      offset_(offset) {}

Corpus::Corpus(LabelSet labels, std::vector<Document> documents,
               EmbeddingStore emb_a, EmbeddingStore emb_b, EmbeddingStore sent)
    : labels_(std::move(labels)),
      documents_(std::move(documents)),
      emb_a_(std::move(emb_a)),
      emb_b_(std::move(emb_b)),
      sent_(std::move(sent)) {
  for (std::size_t i = 0; i < documents_.size(); ++i) {
    const auto& doc = documents_[i];
    if (!by_id_.emplace(doc.id, i).second) {
      throw std::invalid_argument("duplicate document id: " + doc.id);
    }
    if (doc.tokens.empty()) {
      throw std::invalid_argument("document without tokens: " + doc.id);
    }
    if (doc.has_gold() && doc.gold.size() != doc.tokens.size()) {
      throw std::invalid_argument("gold length mismatch in " + doc.id);
    }
    for (int g : doc.gold) {
      if (g < 0 || g > labels_.background()) {
        throw std::invalid_argument("gold code out of range in " + doc.id);
      }
    }
    for (const auto& t : doc.tokens) {
      if (t.emb_a >= emb_a_.rows() || t.emb_b >= emb_b_.rows()) {
        throw std::invalid_argument("token embedding reference out of range in " +
                                    doc.id);
      }
    }
    if (doc.sent_emb >= sent_.rows()) {
      throw std::invalid_argument("sentence embedding reference out of range in " +
                                  doc.id);
    }
    by_split_[static_cast<int>(doc.split)].push_back(i);
    token_count_ += doc.tokens.size();
  }
}

const Document* Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &documents_[it->second];
}

std::optional<std::size_t> Corpus::index_of(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const EmbeddingStore& Corpus::store(Channel channel) const {
  switch (channel) {
    case Channel::kEmbA: return emb_a_;
    case Channel::kEmbB: return emb_b_;
    case Channel::kSent: return sent_;
  }
  return emb_a_;
}

LabelSet LoadLabelSet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string(), 0, "cannot open label set");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IngestError(path.string(), 0, std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array()) {
    throw IngestError(path.string(), 0, "expected {\"classes\": [str]}");
  }
  std::vector<std::string> classes;
  for (const auto& c : j["classes"]) {
    if (!c.is_string()) throw IngestError(path.string(), 0, "class names must be strings");
    classes.push_back(c.get<std::string>());
  }
  try {
    return LabelSet(std::move(classes));
  } catch (const std::invalid_argument& e) {
    throw IngestError(path.string(), 0, e.what());
  }
}

EmbeddingStore LoadEmbeddings(const std::filesystem::path& path,
                              Channel expected) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError(name, 0, "cannot open embedding sidecar");
  char header[kHeaderBytes];
  if (!in.read(header, kHeaderBytes)) {
    throw IngestError(name, 0, "truncated header");
  }
  if (std::memcmp(header, kMagic, sizeof(kMagic)) != 0) {
    throw IngestError(name, 0, "bad magic, expected SWEMB1");
  }
  const auto tag = static_cast<std::uint8_t>(header[6]);
  if (tag > 2) throw IngestError(name, 6, "unknown channel tag " + std::to_string(tag));
  if (static_cast<Channel>(tag) != expected) {
    throw IngestError(name, 6,
                      std::string("channel tag ") + ChannelName(static_cast<Channel>(tag)) +
                          " where " + ChannelName(expected) + " was expected");
  }
  std::uint32_t dim = 0;
  std::uint64_t rows = 0;
  std::memcpy(&dim, header + 7, 4);
  std::memcpy(&rows, header + 11, 8);
  if (dim == 0) throw IngestError(name, 7, "dimension must be positive");

  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<std::uint64_t>(in.tellg());
  const std::uint64_t expected_size = kHeaderBytes + rows * dim * 4ull;
  if (file_size != expected_size) {
    throw IngestError(name, std::min(file_size, expected_size),
                      "dimension mismatch: " + std::to_string(rows) + " rows of dim " +
                          std::to_string(dim) + " need " + std::to_string(expected_size) +
                          " bytes, file has " + std::to_string(file_size));
  }
  in.seekg(kHeaderBytes);
  std::vector<float> data(rows * dim);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(float)));
  for (std::uint64_t r = 0; r < rows; ++r) {
    double norm = 0.0;
    for (std::uint32_t k = 0; k < dim; ++k) {
      const float v = data[r * dim + k];
      if (!std::isfinite(v)) {
        throw IngestError(name, kHeaderBytes + (r * dim + k) * 4,
                          "NaN/Inf in " + std::string(ChannelName(expected)) + " row " +
                              std::to_string(r));
      }
      norm += static_cast<double>(v) * v;
    }
    if (norm == 0.0) {
      throw IngestError(name, kHeaderBytes + r * dim * 4,
                        "zero vector in " + std::string(ChannelName(expected)) + " row " +
                            std::to_string(r));
    }
  }
  return EmbeddingStore(expected, dim, std::move(data));
}

void WriteEmbeddings(const std::filesystem::path& path, Channel channel,
                     std::size_t dim, std::span<const float> data) {
  if (dim == 0 || data.size() % dim != 0) {
    throw std::invalid_argument("embedding data is not a multiple of dim");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto tag = static_cast<std::uint8_t>(channel);
  const auto d = static_cast<std::uint32_t>(dim);
  const std::uint64_t rows = data.size() / dim;
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&tag), 1);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

namespace {

std::string RequireString(const json& obj, const char* key,
                          const std::string& path, std::uint64_t offset,
                          bool allow_missing = false) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (allow_missing) return {};
    throw IngestError(path, offset, std::string("missing field \"") + key + "\"");
  }
  if (!it->is_string()) {
    throw IngestError(path, offset, std::string("field \"") + key + "\" must be a string");
  }
  return it->get<std::string>();
}

}  // namespace

Corpus Ingest(const CorpusPaths& paths) {
  return Ingest(paths, LoadLabelSet(paths.labels));
}

Corpus Ingest(const CorpusPaths& paths, const LabelSet& labels) {
  const std::string name = paths.corpus.string();
  std::ifstream in(paths.corpus);
  if (!in) throw IngestError(name, 0, "cannot open corpus");

  std::vector<Document> docs;
  std::unordered_set<std::string> ids;
  std::size_t token_row = 0;
  std::uint64_t offset = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::uint64_t line_offset = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw IngestError(name, line_offset, where + "malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw IngestError(name, line_offset, where + "expected an object");

    Document doc;
    doc.id = RequireString(j, "id", name, line_offset);
    if (doc.id.empty()) throw IngestError(name, line_offset, where + "empty document id");
    if (!ids.insert(doc.id).second) {
      throw IngestError(name, line_offset, where + "duplicate document id " + doc.id);
    }
    const auto split = ParseSplit(RequireString(j, "split", name, line_offset));
    if (!split) throw IngestError(name, line_offset, where + "split must be train|dev|test");
    doc.split = *split;

    auto toks = j.find("tokens");
    if (toks == j.end() || !toks->is_array() || toks->empty()) {
      throw IngestError(name, line_offset, where + "document needs a non-empty token list");
    }
    for (const auto& t : *toks) {
      if (!t.is_object()) throw IngestError(name, line_offset, where + "token must be an object");
      Token token;
      token.text = RequireString(t, "text", name, line_offset);
      if (token.text.empty()) throw IngestError(name, line_offset, where + "empty token text");
      token.pos = RequireString(t, "pos", name, line_offset, true);
      token.dep = RequireString(t, "dep", name, line_offset, true);
      token.ner = RequireString(t, "ner", name, line_offset, true);
      token.emb_a = token_row;
      token.emb_b = token_row;
      ++token_row;
      doc.tokens.push_back(std::move(token));
    }

    auto gold = j.find("gold");
    if (gold != j.end() && !gold->is_null()) {
      if (!gold->is_array()) throw IngestError(name, line_offset, where + "gold must be a list");
      if (gold->size() != doc.tokens.size()) {
        throw IngestError(name, line_offset,
                          where + "gold has " + std::to_string(gold->size()) +
                              " labels for " + std::to_string(doc.tokens.size()) + " tokens");
      }
      for (const auto& g : *gold) {
        const auto code = g.is_string() ? labels.code(g.get<std::string>()) : std::nullopt;
        if (!code) {
          throw IngestError(name, line_offset, where + "unknown gold label " + g.dump());
        }
        doc.gold.push_back(*code);
      }
    }
    if (doc.split != Split::kTrain && !doc.has_gold()) {
      throw IngestError(name, line_offset,
                        where + std::string(SplitName(doc.split)) + " document " + doc.id +
                            " has no gold labels");
    }
    doc.sent_emb = docs.size();
    docs.push_back(std::move(doc));
  }

  auto emb_a = LoadEmbeddings(paths.emb_a, Channel::kEmbA);
  auto emb_b = LoadEmbeddings(paths.emb_b, Channel::kEmbB);
  auto sent = LoadEmbeddings(paths.sent, Channel::kSent);
  const auto check_rows = [](const std::filesystem::path& p, const EmbeddingStore& s,
                             std::size_t want, const char* unit) {
    if (s.rows() != want) {
      throw IngestError(p.string(), 11,
                        std::string("length mismatch in channel ") + ChannelName(s.channel()) +
                            ": " + std::to_string(s.rows()) + " rows for " +
                            std::to_string(want) + " " + unit);
    }
  };
  check_rows(paths.emb_a, emb_a, token_row, "tokens");
  check_rows(paths.emb_b, emb_b, token_row, "tokens");
  check_rows(paths.sent, sent, docs.size(), "documents");

  return Corpus(labels, std::move(docs), std::move(emb_a), std::move(emb_b),
                std::move(sent));
}

double Cosine(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("cosine: dimension mismatch (" + std::to_string(u.size()) +
                                " vs " + std::to_string(v.size()) + ")");
  }
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    dot += static_cast<double>(u[k]) * v[k];
    nu += static_cast<double>(u[k]) * u[k];
    nv += static_cast<double>(v[k]) * v[k];
  }
  if (nu == 0.0 || nv == 0.0) throw std::invalid_argument("cosine: zero vector");
  return std::clamp(dot / std::sqrt(nu * nv), -1.0, 1.0);
}

CorpusStats ComputeStats(const Corpus& corpus) {
  CorpusStats stats;
  const auto& labels = corpus.labels();
  std::vector<std::size_t> counts(labels.num_outputs(), 0);
  for (const auto& doc : corpus.documents()) {
    auto& s = stats.splits[static_cast<int>(doc.split)];
    ++s.documents;
    s.tokens += doc.size();
    ++stats.all.documents;
    stats.all.tokens += doc.size();
    if (doc.split == Split::kTrain) continue;
    for (int g : doc.gold) {
      ++counts[g];
      ++stats.gold_tokens;
    }
  }
  for (auto* s : {&stats.splits[0], &stats.splits[1], &stats.splits[2], &stats.all}) {
    s->mean_tokens = s->documents ? static_cast<double>(s->tokens) / s->documents : 0.0;
  }
  if (stats.gold_tokens > 0) {
    for (int c = 0; c < labels.num_outputs(); ++c) {
      stats.gold_frequency[labels.name(c)] =
          static_cast<double>(counts[c]) / static_cast<double>(stats.gold_tokens);
    }
  }
  return stats;
}

std::string FormatStats(const CorpusStats& stats, const LabelSet& labels) {
  std::ostringstream out;
  out << std::left << std::setw(8) << "split" << std::right << std::setw(8) << "docs"
      << std::setw(12) << "tokens" << std::setw(14) << "tokens/doc" << '\n';
  const auto row = [&](const char* name, const SplitStats& s) {
    out << std::left << std::setw(8) << name << std::right << std::setw(8) << s.documents
        << std::setw(12) << s.tokens << std::setw(14) << std::fixed << std::setprecision(1)
        << s.mean_tokens << '\n';
  };
  row("train", stats.splits[0]);
  row("dev", stats.splits[1]);
  row("test", stats.splits[2]);
  row("all", stats.all);
  out << "class frequency (dev+test gold):\n";
  if (!stats.has_gold()) {
    out << "  no gold\n";
    return out.str();
  }
  for (int c = 0; c < labels.num_outputs(); ++c) {
    const std::string& name = labels.name(c);
    const std::string shown = c == labels.background() ? "Other" : name;
    out << "  " << std::left << std::setw(12) << (shown + ":") << std::right << std::fixed
        << std::setprecision(3) << stats.gold_frequency.at(name) << '\n';
  }
  return out.str();
}

void WriteCorpusJsonl(const std::filesystem::path& path,
                      const std::vector<Document>& documents,
                      const LabelSet& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& doc : documents) {
    json j;
    j["id"] = doc.id;
    j["split"] = SplitName(doc.split);
    json toks = json::array();
    for (const auto& t : doc.tokens) {
      toks.push_back({{"text", t.text}, {"pos", t.pos}, {"dep", t.dep}, {"ner", t.ner}});
    }
    j["tokens"] = std::move(toks);
    if (doc.has_gold()) {
      json gold = json::array();
      for (int g : doc.gold) gold.push_back(labels.name(g));
      j["gold"] = std::move(gold);
    }
    out << j.dump() << '\n';
  }
}

void WriteLabelSet(const std::filesystem::path& path, const LabelSet& labels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << json{{"classes", labels.classes()}}.dump() << '\n';
}

std::string CaseFold(std::string_view s) { return Lower(s); }

}  // namespace spanlab
