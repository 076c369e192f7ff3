#ifndef SPANLAB_TOOLS_COMMANDS_H_
#define SPANLAB_TOOLS_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "spanlab/corpus.h"
#include "spanlab/label_model.h"
#include "spanlab/session.h"

namespace spanlab::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kStateError = 3 };

struct IngestArgs {
  CorpusPaths paths;
  std::filesystem::path out;
  std::string model = "generative";
  double tau = kDefaultTau;
  std::uint64_t seed = 0;
};
int CmdIngest(const IngestArgs& args, std::ostream& out, std::ostream& err);

struct ApplyArgs {
  std::filesystem::path project;
  std::string split = "test";
  std::filesystem::path out;
  bool force = false;
};
int CmdApply(const ApplyArgs& args, std::ostream& out, std::ostream& err);

// --pred is an export stream (records with "id" and "hard"); --gold is a
// corpus JSONL file. Documents are matched by id.
struct EvaluateArgs {
  std::filesystem::path pred;
  std::filesystem::path gold;
  // Class order for the table; defaults to the sorted non-O names seen.
  std::vector<std::string> classes;
};
int CmdEvaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct SimulateArgs {
  std::filesystem::path project;
  std::size_t budget = 30;
  std::uint64_t seed = 7;
  std::string model = "generative";
  std::filesystem::path out;
};
int CmdSimulate(const SimulateArgs& args, std::ostream& out, std::ostream& err);

struct SynthArgs {
  std::filesystem::path out;
  std::uint64_t seed = 7;
  std::size_t train = 800;
  std::size_t dev = 100;
  std::size_t test = 100;
  double noise = 0.1;
};
int CmdSynth(const SynthArgs& args, std::ostream& out, std::ostream& err);

struct ServeArgs {
  std::filesystem::path project;
  std::string host = "127.0.0.1";
  int port = 8080;
};
// Blocks until SIGINT or SIGTERM, then saves the project.
int CmdServe(const ServeArgs& args, std::ostream& out, std::ostream& err);

// One row of the simulated-annotation curve.
struct CurveRow {
  std::size_t interaction = 0;
  std::size_t elapsed_proxy = 0;
  std::size_t n_lfs = 0;
  double dev_f1 = 0.0;
  double test_f1 = 0.0;
  double baseline_f1 = 0.0;
};

inline constexpr const char* kCurveHeader =
    "interaction,elapsed_proxy,n_lfs,dev_f1,test_f1,baseline_f1";

// Scripted annotator loop over an in-memory project. Progress notes go to
// log. Throws std::invalid_argument when dev, test or train gold is missing.
std::vector<CurveRow> Simulate(Project& project, std::size_t budget, std::ostream& log);
std::string FormatCurve(const std::vector<CurveRow>& rows);

// Gold spans of a document as maximal same-class runs, longest first, ties
// by start.
std::vector<SpanAnnotation> GoldSpans(const Document& doc, const LabelSet& labels);

// Case-insensitive longest-match-first string tagger.
class DictionaryTagger {
 public:
  // The first label recorded for a surface string wins.
  void Add(const std::vector<std::string>& tokens, int label);
  std::vector<int> Tag(const Document& doc, int background) const;
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::vector<std::string>, int> entries_;
  std::size_t longest_ = 0;
};

// Full command line, argv[0] excluded.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spanlab::cli

#endif  // SPANLAB_TOOLS_COMMANDS_H_
