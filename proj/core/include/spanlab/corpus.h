#ifndef SPANLAB_CORPUS_H_
#define SPANLAB_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace spanlab {

// Label codes used throughout the engine. Entity classes are 0..C-1, the
// background class "O" is C, and a labeling function that does not fire
// abstains with kAbstain.
inline constexpr int kAbstain = -1;
inline constexpr const char* kBackground = "O";
inline constexpr const char* kAbstainName = "ABSTAIN";

class LabelSet {
 public:
  LabelSet() = default;
  // Throws std::invalid_argument on empty, duplicate or reserved names.
  explicit LabelSet(std::vector<std::string> classes);

  int num_classes() const { return static_cast<int>(classes_.size()); }
  // |classes| + 1, the width of a posterior row.
  int num_outputs() const { return num_classes() + 1; }
  int background() const { return num_classes(); }

  const std::vector<std::string>& classes() const { return classes_; }
  // Name for a code in [0, C]; "O" for the background code.
  const std::string& name(int code) const;
  // Code for a class name or "O"; nullopt when unknown.
  std::optional<int> code(std::string_view name) const;

  bool operator==(const LabelSet& other) const {
    return classes_ == other.classes_;
  }

 private:
  std::vector<std::string> classes_;
  std::string background_name_ = kBackground;
};

enum class Split { kTrain, kDev, kTest };

const char* SplitName(Split split);
std::optional<Split> ParseSplit(std::string_view name);

enum class Channel : std::uint8_t { kEmbA = 0, kEmbB = 1, kSent = 2 };

const char* ChannelName(Channel channel);
std::optional<Channel> ParseChannel(std::string_view name);

struct Token {
  std::string text;
  std::string pos;
  std::string dep;
  std::string ner;  // empty means no entity
  std::size_t emb_a = 0;
  std::size_t emb_b = 0;
};

struct Document {
  std::string id;
  std::vector<Token> tokens;
  std::size_t sent_emb = 0;
  Split split = Split::kTrain;
  // Label codes in [0, C]; empty for documents without gold. Train gold is
  // kept only for scripted annotators; the engine never reads it.
  std::vector<int> gold;

  bool has_gold() const { return !gold.empty(); }
  std::size_t size() const { return tokens.size(); }
};

// Dense row-major float matrix. Rows are L2-normalized at ingest, so the dot
// product of two rows is their cosine.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(Channel channel, std::size_t dim, std::vector<float> data);

  Channel channel() const { return channel_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  // Dot product of two stored rows (cosine, since rows are unit length).
  double similarity(std::size_t a, std::size_t b) const;

 private:
  Channel channel_ = Channel::kEmbA;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// Raised for any malformed ingest input; carries the file and the line
// number (JSON files) or byte offset (binary sidecars) of the problem.
class IngestError : public std::runtime_error {
 public:
  IngestError(std::string path, std::uint64_t offset, const std::string& what);
  const std::string& path() const { return path_; }
  std::uint64_t offset() const { return offset_; }

 private:
  std::string path_;
  std::uint64_t offset_;
};

struct CorpusPaths {
  std::filesystem::path corpus;
  std::filesystem::path emb_a;
  std::filesystem::path emb_b;
  std::filesystem::path sent;
  std::filesystem::path labels;
};

class Corpus {
 public:
  Corpus(LabelSet labels, std::vector<Document> documents,
         EmbeddingStore emb_a, EmbeddingStore emb_b, EmbeddingStore sent);

  const LabelSet& labels() const { return labels_; }
  const std::vector<Document>& documents() const { return documents_; }
  const Document& document(std::size_t index) const {
    return documents_[index];
  }
  const Document* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

  const EmbeddingStore& store(Channel channel) const;

  // Indices into documents(), in file order.
  const std::vector<std::size_t>& split(Split s) const {
    return by_split_[static_cast<int>(s)];
  }
  std::size_t token_count() const { return token_count_; }

 private:
  LabelSet labels_;
  std::vector<Document> documents_;
  EmbeddingStore emb_a_;
  EmbeddingStore emb_b_;
  EmbeddingStore sent_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::vector<std::size_t> by_split_[3];
  std::size_t token_count_ = 0;
};

LabelSet LoadLabelSet(const std::filesystem::path& path);
EmbeddingStore LoadEmbeddings(const std::filesystem::path& path,
                              Channel expected);
void WriteEmbeddings(const std::filesystem::path& path, Channel channel,
                     std::size_t dim, std::span<const float> data);

// Reads and validates the corpus and its three sidecars. Throws IngestError.
Corpus Ingest(const CorpusPaths& paths);
Corpus Ingest(const CorpusPaths& paths, const LabelSet& labels);

void WriteCorpusJsonl(const std::filesystem::path& path,
                      const std::vector<Document>& documents,
                      const LabelSet& labels);
void WriteLabelSet(const std::filesystem::path& path, const LabelSet& labels);

// ASCII lower-casing used for case-insensitive lexical matching.
std::string CaseFold(std::string_view s);

// Cosine similarity in [-1, 1]. Throws std::invalid_argument on a dimension
// mismatch or a zero vector.
double Cosine(std::span<const float> u, std::span<const float> v);

struct SplitStats {
  std::size_t documents = 0;
  std::size_t tokens = 0;
  double mean_tokens = 0.0;
};

struct CorpusStats {
  SplitStats splits[3];
  SplitStats all;
  // Gold token frequencies over dev and test, keyed by class name plus "O".
  // Empty when no gold tokens exist.
  std::map<std::string, double> gold_frequency;
  std::size_t gold_tokens = 0;
  bool has_gold() const { return gold_tokens > 0; }
};

CorpusStats ComputeStats(const Corpus& corpus);
// Fixed-width table with per-split counts and gold class frequencies. The
// background class is printed as "Other".
std::string FormatStats(const CorpusStats& stats, const LabelSet& labels);

}  // namespace spanlab

#endif  // SPANLAB_CORPUS_H_
