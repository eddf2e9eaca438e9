#include <doctest.h>

#include <fstream>
#include <sstream>

#include "geomrel/report.hpp"
#include "geomrel/rng.hpp"
#include "oracles.hpp"

using namespace geomrel;
namespace fs = std::filesystem;

namespace {

const fs::path kCorpus = fs::path(GEOMREL_DATA_DIR) / "corpus";

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "geomrel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Random bundle over the given corpus forms; U rows get an offset so the
// analysis has signal.
fs::path corpus_bundle(const fs::path& dir, const std::string& name, std::vector<Form> forms, std::size_t layers,
                       std::uint64_t seed) {
  const auto corpus = load_corpus(kCorpus);
  EmbeddingBundle b;
  b.model_id = name;
  b.n_layers = layers;
  b.dim = 12;
  CounterStream rng(seed, 0);
  for (const auto& r : corpus.records()) {
    if (std::find(forms.begin(), forms.end(), r.form) == forms.end()) continue;
    b.prompt_ids.push_back(r.id);
    for (std::size_t l = 0; l < layers; ++l)
      for (std::size_t j = 0; j < b.dim; ++j) {
        double v = rng.next_normal();
        if (j == static_cast<std::size_t>(r.form)) v += 4.0;
        if (!is_answerable(r.label) && j == 5) v += 1.5 + 0.2 * static_cast<double>(l);
        b.data.push_back(static_cast<float>(v));
      }
  }
  write_bundle(b, dir / name);
  return dir / name;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(cli({"--help"}).code == 0);
  CHECK(cli({}).code == 1);
  CHECK(cli({"analyze"}).code == 1);  // --corpus missing
  CHECK(cli({"frobnicate"}).code == 1);
}

TEST_CASE("validate: shipped corpus plus synth bundle") {
  const auto dir = oracle::temp_dir("cli_validate");
  REQUIRE(cli({"synth", "--out", (dir / "synth").string()}).code == 0);
  const auto ok = cli({"validate", "--corpus", kCorpus.string(), "--bundle", "synth=" + (dir / "synth").string()});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("OK") != std::string::npos);

  SUBCASE("corrupted checksum") {
    auto raw = slurp(dir / "synth.bin");
    raw[100] ^= 0x10;
    std::ofstream(dir / "synth.bin", std::ios::binary) << raw;
    const auto r = cli({"validate", "--corpus", kCorpus.string(), "--bundle", "synth=" + (dir / "synth").string()});
    CHECK(r.code != 0);
    CHECK(r.out.find("checksum") != std::string::npos);
  }
  SUBCASE("missing prompt id") {
    auto b = read_bundle(dir / "synth");
    b.prompt_ids.erase(b.prompt_ids.begin() + 13);  // m07u
    b.data.erase(b.data.begin() + 13 * 64, b.data.begin() + 14 * 64);
    write_bundle(b, dir / "short");
    const auto r = cli({"validate", "--corpus", kCorpus.string(), "--bundle", "s=" + (dir / "short").string()});
    CHECK(r.code == 1);
    CHECK(r.out.find("m07u") != std::string::npos);
  }
  SUBCASE("missing files are I/O failures") {
    CHECK(cli({"validate", "--corpus", kCorpus.string(), "--bundle", "x=" + (dir / "nope").string()}).code == 2);
    CHECK(cli({"validate", "--corpus", (dir / "nope.txt").string()}).code == 2);
  }
}

TEST_CASE("analyze output is byte-identical across runs and threads") {
  const auto dir = oracle::temp_dir("cli_analyze");
  const auto b = corpus_bundle(dir, "toy", {Form::Math, Form::Fact, Form::Code}, 1, 3);
  std::vector<std::string> files = {"report.csv", "report.txt", "scores.csv"};
  std::map<std::string, std::string> first;
  for (const std::string threads : {"1", "3", "1"}) {
    const auto out = dir / ("out" + threads);
    const auto r = cli({"analyze", "--corpus", kCorpus.string(), "--bundle", "toy=" + b.string(), "--nperm", "500",
                        "--seed", "9", "--threads", threads, "--out", out.string()});
    REQUIRE(r.code == 0);
    for (const auto& f : files) {
      const auto text = slurp(out / f);
      if (first.contains(f))
        CHECK(text == first[f]);
      else
        first[f] = text;
    }
  }
  CHECK(first["report.csv"].rfind("# seed=9 n_perm=500\nform,model,n,dist_A,dist_U,delta,p,d,auc,f1,threshold\n", 0) == 0);
  CHECK(first["report.csv"].find("\nMATH,toy,50,") != std::string::npos);
  CHECK(first["report.csv"].find("\nFACT,toy,10,") != std::string::npos);
  CHECK(first["report.csv"].find("\nCODE,toy,30,") != std::string::npos);
  // joint context gives MATH/FACT drift targets; CODE has none
  CHECK(first["scores.csv"].find("m01a,toy,MATH,A,") != std::string::npos);
  CHECK(first["scores.csv"].find(",CODE,A,") != std::string::npos);
  CHECK(first["scores.csv"].find(",NONE\n") != std::string::npos);
  CHECK(first["scores.csv"].find(",MATH\n") != std::string::npos);
}

TEST_CASE("analyze with generation logs emits baselines") {
  const auto dir = oracle::temp_dir("cli_baselines");
  const auto b = corpus_bundle(dir, "toy", {Form::Math, Form::Fact}, 1, 4);
  const auto corpus = load_corpus(kCorpus);
  GenerationLog log;
  log.model_id = "toy";
  for (const auto& r : corpus.records()) {
    if (r.form == Form::Code) continue;
    GenerationEntry e;
    const bool u = !is_answerable(r.label);
    e.greedy_output = u ? "That is undefined." : "The answer is 42.";
    e.samples = u ? std::vector<std::string>{"1", "2", "3", "4", "4"} : std::vector<std::string>(5, "The answer is 42");
    e.k = 5;
    e.temperature = 0.7;
    log.entries[r.id] = e;
  }
  std::ofstream(dir / "gen.log") << [&] {
    std::ostringstream s;
    write_generation_log(log, s);
    return s.str();
  }();
  const auto r = cli({"analyze", "--corpus", kCorpus.string(), "--bundle", "toy=" + b.string(), "--generations",
                      "toy=" + (dir / "gen.log").string(), "--nperm", "100", "--out", (dir / "out").string()});
  REQUIRE(r.code == 0);
  const auto base = slurp(dir / "out" / "baselines.csv");
  CHECK(base.rfind("form,model,sc_variant,sc_auc,sc_f1,refusal_auc,refusal_f1\n", 0) == 0);
  CHECK(base.find("MATH,toy,answer_disagree,1.000000,,1.000000,1.000000") != std::string::npos);
  CHECK(base.find("FACT,toy,rouge_disagree,") != std::string::npos);
  CHECK(slurp(dir / "out" / "sc_scores.csv").rfind("prompt_id,model,variant,score\n", 0) == 0);
}

TEST_CASE("layerwise and analyze agree on the last layer") {
  const auto dir = oracle::temp_dir("cli_layerwise");
  const auto b = corpus_bundle(dir, "toy", {Form::Math, Form::Fact}, 4, 5);
  const auto common = std::vector<std::string>{"--corpus", kCorpus.string(), "--bundle", "toy=" + b.string()};
  auto args = common;
  args.insert(args.begin(), "layerwise");
  for (const auto& a : {std::string("--form"), std::string("math"), std::string("--out"), (dir / "lw").string()})
    args.push_back(a);
  REQUIRE(cli(args).code == 0);
  args = common;
  args.insert(args.begin(), "analyze");
  for (const auto& a : {std::string("--nperm"), std::string("10"), std::string("--out"), (dir / "an").string()})
    args.push_back(a);
  REQUIRE(cli(args).code == 0);

  const auto lw = slurp(dir / "lw" / "layerwise_toy.csv");
  const auto last = lw.substr(lw.rfind("toy,3,"));
  const auto delta_lw = last.substr(6, last.find(',', 6) - 6);
  const auto rep = slurp(dir / "an" / "report.csv");
  const auto row = rep.substr(rep.find("MATH,toy,"));
  std::vector<std::string> cells;
  std::stringstream ss(row.substr(0, row.find('\n')));
  for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
  CHECK(cells[5] == delta_lw);
  CHECK(slurp(dir / "lw" / "layerwise_summary.csv").rfind("model,peak_layer,peak_delta,last_layer_delta,narrows_from_below\ntoy,", 0) == 0);
}

TEST_CASE("layerwise refuses single-layer bundles; subsets by pair count") {
  const auto dir = oracle::temp_dir("cli_layerwise1");
  const auto one = corpus_bundle(dir, "one", {Form::Math}, 1, 6);
  CHECK(cli({"layerwise", "--corpus", kCorpus.string(), "--bundle", "one=" + one.string(), "--out",
             (dir / "o").string()})
            .code == 1);
  const auto multi = corpus_bundle(dir, "multi", {Form::Math}, 3, 6);
  CHECK(cli({"layerwise", "--corpus", kCorpus.string(), "--bundle", "m=" + multi.string(), "--pairs", "20",
             "--out", (dir / "o").string()})
            .code == 0);
  std::ofstream(dir / "ids.txt") << "m01a\nm01u\nm02a\nm02u\n";
  CHECK(cli({"layerwise", "--corpus", kCorpus.string(), "--bundle", "m=" + multi.string(), "--prompts",
             (dir / "ids.txt").string(), "--out", (dir / "o").string()})
            .code == 0);
}

TEST_CASE("pca output and determinism") {
  const auto dir = oracle::temp_dir("cli_pca");
  const auto b = corpus_bundle(dir, "toy", {Form::Math, Form::Fact, Form::Code}, 1, 7);
  for (const auto* out : {"p1", "p2"})
    REQUIRE(cli({"pca", "--corpus", kCorpus.string(), "--bundle", "toy=" + b.string(), "--out", (dir / out).string()})
                .code == 0);
  const auto csv = slurp(dir / "p1" / "pca_toy.csv");
  CHECK(csv == slurp(dir / "p2" / "pca_toy.csv"));
  CHECK(csv.rfind("prompt_id,form,label,x,y,is_centroid\n", 0) == 0);
  CHECK(csv.find("centroid_MATH,MATH,A,") != std::string::npos);
  const auto summary = slurp(dir / "p1" / "pca_summary.csv");
  const auto sil = std::stod(summary.substr(summary.rfind(',') + 1));
  CHECK(sil > 0.0);
}

TEST_CASE("consensus command") {
  const auto dir = oracle::temp_dir("cli_consensus");
  const auto a = corpus_bundle(dir, "a", {Form::Math, Form::Fact}, 1, 8);
  const auto b = corpus_bundle(dir, "b", {Form::Math, Form::Fact}, 1, 9);
  std::ofstream(dir / "cat.txt") << "m07u|EXTREMAL\n";
  const auto r = cli({"consensus", "--corpus", kCorpus.string(), "--bundle", "a=" + a.string(), "--bundle",
                      "b=" + b.string(), "--categories", (dir / "cat.txt").string(), "--out", (dir / "c").string()});
  REQUIRE(r.code == 0);
  const auto csv = slurp(dir / "c" / "consensus.csv");
  CHECK(csv.rfind("prompt_id,drifted_in,consensus,category_tag\n", 0) == 0);
  CHECK(csv.find("EXTREMAL") != std::string::npos);
  CHECK(slurp(dir / "c" / "geometry_behavior.csv").rfind("prompt_id,model,own_dist,drifted,above_threshold,behavior\n", 0) == 0);
  CHECK(cli({"consensus", "--corpus", kCorpus.string(), "--bundle", "a=" + a.string(), "--context", "separate",
             "--out", (dir / "c").string()})
            .code == 1);
}

TEST_CASE("degenerate data maps to exit code 3") {
  const auto dir = oracle::temp_dir("cli_degenerate");
  const auto corpus = load_corpus(kCorpus);
  EmbeddingBundle b;
  b.model_id = "flat";
  b.dim = 4;
  for (const auto* r : corpus.of_form(Form::Code)) {
    b.prompt_ids.push_back(r->id);
    for (int j = 0; j < 4; ++j) b.data.push_back(1.0f);  // centring leaves all zeros
  }
  write_bundle(b, dir / "flat");
  const auto r = cli({"analyze", "--corpus", kCorpus.string(), "--bundle", "flat=" + (dir / "flat").string(),
                      "--nperm", "10", "--out", (dir / "o").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("degenerate") != std::string::npos);
}
