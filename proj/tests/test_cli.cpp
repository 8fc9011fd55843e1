#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end checks of the installed command-line surface: exit codes,
// atomic output behavior, reproducibility. The binary path comes from CMake.

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("densedial_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  fs::path file(const std::string& name) const { return path / name; }
};

RunResult run_cli(const std::string& args, const TempDir& dir, const std::string& stdin_file = "") {
  const fs::path out = dir.file("stdout.txt"), err = dir.file("stderr.txt");
  std::string cmd = std::string(DENSEDIAL_CLI_PATH) + " " + args;
  if (!stdin_file.empty()) cmd += " < " + stdin_file;
  cmd += " > " + out.string() + " 2> " + err.string();
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = slurp(out);
  result.err = slurp(err);
  return result;
}

void write_file(const fs::path& p, const std::string& contents) {
  std::ofstream out(p);
  out << contents;
}

std::string tiny_train_jsonl() {
  std::ostringstream ss;
  for (int s = 0; s < 30; ++s) {
    ss << R"({"id":"s)" << s << R"(","utterances":["hello topic)" << s % 5 << R"( one",)"
       << R"("reply topic)" << s % 5 << R"( two","more topic)" << s % 5 << R"( text",)"
       << R"("final topic)" << s % 5 << R"( answer"]})"
       << "\n";
  }
  return ss.str();
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (const char c : text) n += (c == '\n');
  return n;
}

}  // namespace

TEST_CASE("augment writes one pair per cut with correct counts") {
  TempDir dir;
  write_file(dir.file("train.jsonl"), tiny_train_jsonl());
  const auto result = run_cli("augment --in " + dir.file("train.jsonl").string() + " --out " +
                                  dir.file("pairs.jsonl").string() + " --k 5",
                              dir);
  CHECK(result.exit_code == 0);
  // every session has m=4 -> min(5, 3) = 3 pairs
  CHECK(count_lines(slurp(dir.file("pairs.jsonl"))) == 30 * 3);
  CHECK(result.err.find("pairs=90") != std::string::npos);
  // no temp residue
  CHECK(!fs::exists(dir.file("pairs.jsonl.tmp")));
}

TEST_CASE("usage errors exit 1, data errors exit 2") {
  TempDir dir;
  SUBCASE("missing required flag") {
    const auto r = run_cli("augment --in x.jsonl", dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("--out") != std::string::npos);
  }
  SUBCASE("unknown flag names the offending token") {
    const auto r = run_cli("augment --in a --out b --bogus 3", dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("--bogus") != std::string::npos);
  }
  SUBCASE("unknown subcommand") {
    CHECK(run_cli("frobnicate", dir).exit_code == 1);
  }
  SUBCASE("unreadable input") {
    const auto r = run_cli("augment --in /nonexistent/x.jsonl --out " +
                               dir.file("out.jsonl").string(),
                           dir);
    CHECK(r.exit_code == 2);
  }
  SUBCASE("malformed input names the line") {
    write_file(dir.file("bad.jsonl"), "{broken\n");
    const auto r = run_cli("augment --in " + dir.file("bad.jsonl").string() + " --out " +
                               dir.file("out.jsonl").string(),
                           dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find(":1:") != std::string::npos);
    // failed command leaves no partial output
    CHECK(!fs::exists(dir.file("out.jsonl")));
    CHECK(!fs::exists(dir.file("out.jsonl.tmp")));
  }
}

TEST_CASE("version flag") {
  TempDir dir;
  const auto r = run_cli("--version", dir);
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("densedial") != std::string::npos);
}

TEST_CASE("train is byte-reproducible and emits per-epoch logs") {
  TempDir dir;
  write_file(dir.file("train.jsonl"), tiny_train_jsonl());
  const std::string base = "train --train " + dir.file("train.jsonl").string() +
                           " --k 2 --batch 8 --epochs 2 --lr 1e-3 --seed 42 --d-emb 8 --dim 8";

  const auto r1 = run_cli(base + " --out " + dir.file("a.ckpt").string() + " --manifest " +
                              dir.file("manifest.json").string(),
                          dir);
  REQUIRE(r1.exit_code == 0);
  CHECK(count_lines(r1.out) == 2);  // one JSON log line per epoch
  CHECK(r1.out.find("\"epoch\":1") != std::string::npos);

  const auto r2 = run_cli(base + " --out " + dir.file("b.ckpt").string(), dir);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));

  const std::string manifest = slurp(dir.file("manifest.json"));
  CHECK(manifest.find("\"command\": \"train\"") != std::string::npos);
  CHECK(manifest.find("\"seed\": 42") != std::string::npos);
  CHECK(manifest.find("train.jsonl") != std::string::npos);

  SUBCASE("the full index/search/eval path runs") {
    // responses: the original gold responses of each session
    std::ostringstream responses;
    for (int s = 0; s < 30; ++s)
      responses << R"({"id":"r)" << s << R"(","text":"final topic)" << s % 5
                << R"( answer"})" << "\n";
    write_file(dir.file("responses.jsonl"), responses.str());

    const auto rb = run_cli("build-index --ckpt " + dir.file("a.ckpt").string() +
                                " --responses " + dir.file("responses.jsonl").string() +
                                " --kind ivf --nlist 2 --seed 7 --out " + dir.file("resp.idx").string(),
                            dir);
    REQUIRE(rb.exit_code == 0);

    // identical inputs + seed give a byte-identical index
    const auto rb2 = run_cli("build-index --ckpt " + dir.file("a.ckpt").string() +
                                 " --responses " + dir.file("responses.jsonl").string() +
                                 " --kind ivf --nlist 2 --seed 7 --out " + dir.file("resp2.idx").string(),
                             dir);
    REQUIRE(rb2.exit_code == 0);
    CHECK(slurp(dir.file("resp.idx")) == slurp(dir.file("resp2.idx")));

    write_file(dir.file("queries.txt"), "hello topic1 one\treply topic1 two\n");
    const auto rs = run_cli("search --idx " + dir.file("resp.idx").string() + " --ckpt " +
                                dir.file("a.ckpt").string() + " --topk 3 --nprobe 2 --responses " +
                                dir.file("responses.jsonl").string(),
                            dir, dir.file("queries.txt").string());
    REQUIRE(rs.exit_code == 0);
    CHECK(rs.out.find("\"results\"") != std::string::npos);
    CHECK(rs.out.find("topic") != std::string::npos);

    const auto re = run_cli("e2e-eval --ckpt " + dir.file("a.ckpt").string() + " --idx " +
                                dir.file("resp.idx").string() + " --responses " +
                                dir.file("responses.jsonl").string() + " --test " +
                                dir.file("train.jsonl").string() + " --nprobe 2",
                            dir);
    REQUIRE(re.exit_code == 0);
    CHECK(re.out.find("recall_at_1") != std::string::npos);

    const auto rp = run_cli("pipeline-eval --ckpt " + dir.file("a.ckpt").string() + " --train " +
                                dir.file("train.jsonl").string() + " --test " +
                                dir.file("train.jsonl").string() + " --recall-size 100",
                            dir);
    REQUIRE(rp.exit_code == 0);
    CHECK(rp.out.find("bm25-pipeline") != std::string::npos);
  }
}

TEST_CASE("evaluate computes rerank metrics from an eval file") {
  TempDir dir;
  write_file(dir.file("train.jsonl"), tiny_train_jsonl());
  write_file(dir.file("eval.jsonl"),
             R"({"id":"e0","context":["hello topic1"],"candidates":[{"text":"final topic1","rel":1},{"text":"final topic2","rel":0}]})"
             "\n"
             R"({"id":"e1","context":["hello topic2"],"candidates":[{"text":"final topic2","rel":1},{"text":"final topic0","rel":0}]})"
             "\n");
  const auto rt = run_cli("train --train " + dir.file("train.jsonl").string() +
                              " --k 1 --batch 4 --epochs 1 --d-emb 8 --dim 8 --out " +
                              dir.file("m.ckpt").string(),
                          dir);
  REQUIRE(rt.exit_code == 0);
  const auto re = run_cli("evaluate --ckpt " + dir.file("m.ckpt").string() + " --test " +
                              dir.file("eval.jsonl").string() +
                              " --metrics map,mrr,p1,r10@1 --out " + dir.file("report.json").string(),
                          dir);
  REQUIRE(re.exit_code == 0);
  const std::string report = slurp(dir.file("report.json"));
  CHECK(report.find("\"map\"") != std::string::npos);
  CHECK(report.find("\"sessions\": 2") != std::string::npos);

  SUBCASE("requesting binary metrics on graded labels is a data error") {
    write_file(dir.file("graded.jsonl"),
               R"({"id":"g0","context":["hello"],"candidates":[{"text":"a","rel":3},{"text":"b","rel":1}]})"
               "\n");
    const auto rg = run_cli("evaluate --ckpt " + dir.file("m.ckpt").string() + " --test " +
                                dir.file("graded.jsonl").string() + " --metrics map",
                            dir);
    CHECK(rg.exit_code == 2);
    // ndcg on the same file works
    const auto rn = run_cli("evaluate --ckpt " + dir.file("m.ckpt").string() + " --test " +
                                dir.file("graded.jsonl").string() + " --metrics ndcg@3",
                            dir);
    CHECK(rn.exit_code == 0);
  }
}

TEST_CASE("bench reports latency quantiles") {
  TempDir dir;
  write_file(dir.file("train.jsonl"), tiny_train_jsonl());
  std::ostringstream responses;
  for (int s = 0; s < 30; ++s)
    responses << R"({"id":"r)" << s << R"(","text":"final topic)" << s % 5 << R"( answer"})"
              << "\n";
  write_file(dir.file("responses.jsonl"), responses.str());
  std::ostringstream queries;
  for (int q = 0; q < 25; ++q) queries << "hello topic" << q % 5 << " one\n";
  write_file(dir.file("queries.txt"), queries.str());

  REQUIRE(run_cli("train --train " + dir.file("train.jsonl").string() +
                      " --k 1 --batch 4 --epochs 1 --d-emb 8 --dim 8 --out " +
                      dir.file("m.ckpt").string(),
                  dir)
              .exit_code == 0);
  REQUIRE(run_cli("build-index --ckpt " + dir.file("m.ckpt").string() + " --responses " +
                      dir.file("responses.jsonl").string() + " --kind flat --out " +
                      dir.file("flat.idx").string(),
                  dir)
              .exit_code == 0);

  const auto rb = run_cli("bench --mode flat --queries " + dir.file("queries.txt").string() +
                              " --idx " + dir.file("flat.idx").string() + " --ckpt " +
                              dir.file("m.ckpt").string() + " --warmup 5",
                          dir);
  REQUIRE(rb.exit_code == 0);
  CHECK(rb.out.find("\"avg_ms\"") != std::string::npos);
  CHECK(rb.out.find("\"query_count\": 20") != std::string::npos);

  const auto rp = run_cli("bench --mode bm25-pipeline --queries " + dir.file("queries.txt").string() +
                              " --ckpt " + dir.file("m.ckpt").string() + " --train " +
                              dir.file("train.jsonl").string() + " --warmup 5",
                          dir);
  REQUIRE(rp.exit_code == 0);
  CHECK(rp.out.find("bm25-pipeline") != std::string::npos);
}
