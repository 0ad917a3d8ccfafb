#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "riskspan/cli.hpp"

using namespace riskspan;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// Fresh scratch directory per test case.
struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("riskspan_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& file) const { return (dir / file).string(); }
};

const std::vector<std::string> kFastTrain = {"--epochs", "2", "--embed-dim", "8", "--attention-dim", "8", "--quiet"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"gen-data"}).code == cli::kExitUsage);
  CHECK(run({"gen-data", "--out", "x", "--count", "many"}).code == cli::kExitUsage);
  CHECK(run({"train", "--corpus", "c", "--out", "m", "--lambda", "1.5"}).code == cli::kExitUsage);
  CHECK(run({"bench", "--model", "m", "--corpus", "c", "--reps", "2"}).code == cli::kExitUsage);
  CHECK(run({"eval", "--pred", "p", "--gold", "g", "--mode", "fuzzy"}).code == cli::kExitUsage);
  CHECK(run({"train", "--corpus", "c", "--out", "m", "--grid-lambda", "--grid", "0,abc"}).code != cli::kExitOk);
}

TEST_CASE("help exits with 0") {
  const Result r = run({"--help"});
  CHECK(r.code == cli::kExitOk);
  CHECK(r.out.find("gen-data") != std::string::npos);
  CHECK(run({"train", "--help"}).code == cli::kExitOk);
}

TEST_CASE("gen-data writes corpus and manifest deterministically") {
  Scratch s("gen");
  REQUIRE(run({"gen-data", "--count", "50", "--seed", "7", "--out", s / "a.jsonl", "--quiet"}).code == 0);
  REQUIRE(run({"gen-data", "--count", "50", "--seed", "7", "--out", s / "b.jsonl", "--quiet"}).code == 0);
  CHECK(slurp(s / "a.jsonl") == slurp(s / "b.jsonl"));
  const std::string body = slurp(s / "a.jsonl");
  CHECK(std::count(body.begin(), body.end(), '\n') == 50);
  const auto manifest = nlohmann::json::parse(slurp(s / "a.jsonl.manifest.json"));
  CHECK(manifest["seed"] == 7);
  CHECK(manifest["count"] == 50);
  CHECK(manifest["lexicon_hash"].get<std::string>().size() == 16);

  REQUIRE(run({"gen-data", "--count", "0", "--out", s / "empty.jsonl", "--quiet"}).code == 0);
  CHECK(slurp(s / "empty.jsonl").empty());
  CHECK(fs::exists(s / "empty.jsonl.manifest.json"));
}

TEST_CASE("runtime errors exit with 1 and name the problem") {
  Scratch s("runtime");
  REQUIRE(run({"gen-data", "--count", "20", "--out", s / "c.jsonl", "--quiet"}).code == 0);
  const Result missing = run({"extract", "--model", s / "nope.json", "--corpus", s / "c.jsonl", "--out", s / "p.jsonl"});
  CHECK(missing.code == cli::kExitRuntime);
  CHECK(missing.err.find(s / "nope.json") != std::string::npos);

  spit(s / "bad.jsonl", "{\"id\":\"x\",\"text\":\"t\",\"risk\":\"e\"}\n");
  CHECK(run(cat({"train", "--corpus", s / "bad.jsonl", "--out", s / "m.json"}, kFastTrain)).code == cli::kExitRuntime);
  CHECK(run({"report", "--input", s / "c.jsonl"}).code == cli::kExitRuntime);
}

TEST_CASE("grad-check exit status follows the threshold") {
  const Result ok = run({"grad-check"});
  CHECK(ok.code == cli::kExitOk);
  const auto report = nlohmann::json::parse(ok.out);
  CHECK(report["pass"] == true);
  CHECK(report["checks"].size() == 6);
  CHECK(run({"grad-check"}).out == ok.out);
  CHECK(run({"grad-check", "--threshold", "1e-12"}).code == cli::kExitRuntime);
}

TEST_CASE("config files supply defaults that flags override") {
  Scratch s("config");
  spit(s / "cfg.json", R"({"count": 12, "seed": 3, "quiet": true})");
  REQUIRE(run({"gen-data", "--config", s / "cfg.json", "--out", s / "a.jsonl"}).code == 0);
  CHECK(nlohmann::json::parse(slurp(s / "a.jsonl.manifest.json"))["count"] == 12);
  REQUIRE(run({"gen-data", "--config", s / "cfg.json", "--out", s / "b.jsonl", "--count", "5"}).code == 0);
  CHECK(nlohmann::json::parse(slurp(s / "b.jsonl.manifest.json"))["count"] == 5);
  CHECK(nlohmann::json::parse(slurp(s / "b.jsonl.manifest.json"))["seed"] == 3);

  spit(s / "unknown.json", R"({"count": 12, "colour": "blue"})");
  const Result r = run({"gen-data", "--config", s / "unknown.json", "--out", s / "c.jsonl"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("colour") != std::string::npos);
  spit(s / "broken.json", "{");
  CHECK(run({"gen-data", "--config", s / "broken.json", "--out", s / "c.jsonl"}).code == cli::kExitUsage);
  spit(s / "range.json", R"({"lambda": 3})");
  CHECK(run({"train", "--config", s / "range.json", "--corpus", s / "x", "--out", s / "m"}).code == cli::kExitUsage);
}

TEST_CASE("train, extract, eval and report pipeline") {
  Scratch s("pipeline");
  REQUIRE(run({"gen-data", "--count", "80", "--seed", "2", "--out", s / "c.jsonl", "--quiet"}).code == 0);
  const std::string corpus_before = slurp(s / "c.jsonl");
  REQUIRE(run(cat({"train", "--corpus", s / "c.jsonl", "--out", s / "m.json", "--lambda", "0.5", "--seed", "1"}, kFastTrain)).code == 0);
  CHECK(fs::exists(s / "m.json"));
  const std::string history = slurp(s / "m.json.history.jsonl");
  CHECK(std::count(history.begin(), history.end(), '\n') == 2);

  REQUIRE(run({"extract", "--model", s / "m.json", "--corpus", s / "c.jsonl", "--out", s / "p.jsonl"}).code == 0);
  const std::string preds = slurp(s / "p.jsonl");
  CHECK(std::count(preds.begin(), preds.end(), '\n') == 80);
  CHECK(preds.rfind("{\"id\":\"syn-000000\"", 0) == 0);
  REQUIRE(run({"extract", "--model", s / "m.json", "--corpus", s / "c.jsonl", "--out", s / "p2.jsonl"}).code == 0);
  CHECK(slurp(s / "p2.jsonl") == preds);

  REQUIRE(run({"eval", "--pred", s / "p.jsonl", "--gold", s / "c.jsonl", "--model", s / "m.json", "--out", s / "r.json"}).code == 0);
  const auto report = nlohmann::json::parse(slurp(s / "r.json"));
  CHECK(report["spans"]["primary_mode"] == "exact");
  CHECK(report["spans"].contains("overlap"));
  CHECK(report["cls"]["per_class"].size() == 4);
  CHECK(report["embedding_match_recall"].is_number());
  CHECK(report["bench"].is_null());
  const Result overlap = run({"eval", "--pred", s / "p.jsonl", "--gold", s / "c.jsonl", "--mode", "overlap"});
  REQUIRE(overlap.code == 0);
  CHECK(nlohmann::json::parse(overlap.out)["spans"]["primary_mode"] == "overlap");
  const Result benched = run({"eval", "--pred", s / "p.jsonl", "--gold", s / "c.jsonl", "--model", s / "m.json", "--bench-reps", "3"});
  REQUIRE(benched.code == 0);
  CHECK(nlohmann::json::parse(benched.out)["bench"]["samples"] == 240);

  const Result md = run({"report", "--input", s / "r.json"});
  REQUIRE(md.code == 0);
  CHECK(md.out.find("| exact |") != std::string::npos);

  const Result bench = run({"bench", "--model", s / "m.json", "--corpus", s / "c.jsonl", "--reps", "3"});
  REQUIRE(bench.code == 0);
  CHECK(nlohmann::json::parse(bench.out)["per_instance"].size() == 240);

  // Inputs are never modified.
  CHECK(slurp(s / "c.jsonl") == corpus_before);

  // Predictions for a different id set are rejected, naming the ids.
  spit(s / "other.jsonl", "{\"id\":\"zzz\",\"text\":\"hello there\",\"risk\":\"a\"}\n");
  const Result mismatch = run({"eval", "--pred", s / "p.jsonl", "--gold", s / "other.jsonl"});
  CHECK(mismatch.code == cli::kExitRuntime);
  CHECK(mismatch.err.find("zzz") != std::string::npos);
}

TEST_CASE("lambda grid search writes a dev table") {
  Scratch s("grid");
  REQUIRE(run({"gen-data", "--count", "60", "--out", s / "c.jsonl", "--quiet"}).code == 0);
  REQUIRE(run(cat({"train", "--corpus", s / "c.jsonl", "--out", s / "m.json", "--grid-lambda", "--grid", "0,0.5"}, kFastTrain)).code == 0);
  const auto grid = nlohmann::json::parse(slurp(s / "m.json.grid.json"));
  CHECK(grid["table"].size() == 2);
  CHECK(fs::exists(s / "m.json"));
}

TEST_CASE("crossval aggregates fold reports") {
  Scratch s("crossval");
  REQUIRE(run({"gen-data", "--count", "60", "--out", s / "c.jsonl", "--quiet"}).code == 0);
  const Result r = run(cat({"crossval", "--corpus", s / "c.jsonl", "--k", "3", "--seed", "3"}, kFastTrain));
  REQUIRE(r.code == 0);
  const auto report = nlohmann::json::parse(r.out);
  REQUIRE(report["folds"].size() == 3);
  double sum = 0.0;
  for (const auto& f : report["folds"]) sum += f["cls"]["macro_f1"].get<double>();
  CHECK(std::abs(report["aggregate"]["macro_f1"]["mean"].get<double>() - sum / 3.0) <= 1e-12);

  const Result b = run({"crossval", "--corpus", s / "c.jsonl", "--k", "3", "--baseline", "tfidf-lr", "--quiet"});
  REQUIRE(b.code == 0);
  const auto base = nlohmann::json::parse(b.out);
  CHECK(base["method"] == "tfidf-lr");
  CHECK(base["folds"][0]["spans"].is_null());
  CHECK(run({"report", "--input", s / "c.jsonl"}).code == cli::kExitRuntime);
}

TEST_CASE("baseline models train and extract through the CLI") {
  Scratch s("baseline");
  REQUIRE(run({"gen-data", "--count", "60", "--out", s / "c.jsonl", "--quiet"}).code == 0);
  REQUIRE(run({"train", "--corpus", s / "c.jsonl", "--out", s / "b.json", "--baseline", "tfidf-lr", "--quiet"}).code == 0);
  REQUIRE(run({"extract", "--model", s / "b.json", "--corpus", s / "c.jsonl", "--out", s / "p.jsonl"}).code == 0);
  CHECK(slurp(s / "p.jsonl").find("\"spans\":[]") != std::string::npos);
}

TEST_CASE("kernel selection flag") {
  CHECK(run({"grad-check", "--kernels", "scalar"}).code == cli::kExitOk);
  CHECK(run({"grad-check", "--kernels", "neon"}).code == cli::kExitUsage);
}
