#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "nbl/config.hpp"
#include "nbl/corpus.hpp"

using namespace nbl;

namespace {

struct TempFile {
  std::string path;
  TempFile(const std::string& name, const std::string& content) : path(name) {
    std::ofstream(path) << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_SUITE("config") {

TEST_CASE("key = value parsing with comments and blanks") {
  TempFile f("cfg1.txt",
             "# training setup\n"
             "epochs = 10\n"
             "\n"
             "lr= 0.001  # inline comment\n"
             "binding =D_alone\n");
  auto cfg = read_config(f.path);
  CHECK(cfg_u64(cfg, "epochs", 0) == 10);
  CHECK(cfg_double(cfg, "lr", 0.0) == doctest::Approx(0.001));
  CHECK(cfg_str(cfg, "binding", "") == "D_alone");
  CHECK(cfg_u64(cfg, "missing", 7) == 7);  // fallback
}

TEST_CASE("malformed lines and values raise informative errors") {
  TempFile f("cfg2.txt", "epochs = 10\nnot a pair\n");
  CHECK_THROWS_WITH_AS(read_config(f.path), doctest::Contains("line 2"),
                       std::runtime_error);
  TempFile g("cfg3.txt", "epochs = ten\n");
  auto cfg = read_config(g.path);
  CHECK_THROWS_WITH_AS(cfg_u64(cfg, "epochs", 0),
                       doctest::Contains("epochs"), std::runtime_error);
}

TEST_CASE("vocab round trip through a file") {
  Vocab v = build_vocab({{"cat", "sat", "cat"}}, 10);
  write_vocab("vcb1.txt", v);
  Vocab back = read_vocab("vcb1.txt");
  std::remove("vcb1.txt");
  CHECK(back.words == v.words);
  CHECK(back.unk == v.unk);
  CHECK(back.encode("cat") == v.encode("cat"));
  CHECK(back.encode("dog") == back.unk);
}

}  // TEST_SUITE
