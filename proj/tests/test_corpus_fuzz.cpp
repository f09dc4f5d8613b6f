#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>

#include <nlohmann/json.hpp>

#include "acmg/corpus_io.hpp"
#include "acmg/error.hpp"
#include "acmg/synth.hpp"
#include "corpus_cases.hpp"

using namespace acmg;
using nlohmann::json;

TEST_CASE("manifest mutations produce typed errors, never crashes") {
  const Corpus c = testing::fuzz_base_corpus();
  const auto dir = std::filesystem::temp_directory_path() / "acmg_fuzz";
  const CorpusFiles files = write_corpus(c, dir);
  std::ifstream mf(files.manifest), bf(files.blob, std::ios::binary);
  const std::string manifest{std::istreambuf_iterator<char>(mf), {}};
  const std::string blob{std::istreambuf_iterator<char>(bf), {}};

  std::mt19937_64 rng(1234);
  std::size_t typed = 0, accepted = 0;
  const std::size_t n_mutations = 3000;
  for (std::size_t i = 0; i < n_mutations; ++i) {
    const std::string m = testing::mutate(manifest, rng);
    try {
      const Corpus got = parse_corpus(m, blob);
      got.validate();
      ++accepted;
    } catch (const FormatError&) {
      ++typed;
    } catch (const std::exception& e) {
      FAIL_CHECK("mutation " << i << " raised an untyped error: " << e.what());
    }
  }
  MESSAGE("mutations: " << n_mutations << ", typed errors: " << typed << ", accepted: " << accepted);
  CHECK(typed + accepted == n_mutations);
  CHECK(typed > n_mutations / 2);
  std::filesystem::remove_all(dir);
}
