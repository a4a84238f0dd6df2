#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "nerh/corpus.hpp"
#include "nerh/extraction.hpp"
#include "nerh/matching.hpp"
#include "nerh/scoring.hpp"

namespace {

std::vector<std::string> names(int n, int seed) {
  std::mt19937 rng(seed);
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("Entity " + std::to_string(rng() % (2 * n)));
  return out;
}

// Roughly the size of one news article.
std::string article_text() {
  std::string s;
  for (int i = 0; i < 60; ++i)
    s += "The \xE2\x80\x9C" "company\xE2\x80\x9D paid Mr. Smith $" + std::to_string(i) + " million.\n";
  return s;
}

void BM_Score(benchmark::State& state) {
  const auto gold = names(static_cast<int>(state.range(0)), 1);
  const auto pred = names(static_cast<int>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(nerh::score(gold, pred));
}
BENCHMARK(BM_Score)->Arg(8)->Arg(64)->Arg(512);

void BM_OracleMatch(benchmark::State& state) {
  const auto gold = names(static_cast<int>(state.range(0)), 3);
  const auto pred = names(static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(nerh::oracle_match(gold, pred));
}
BENCHMARK(BM_OracleMatch)->Arg(8)->Arg(64);

void BM_SalvageParse(benchmark::State& state) {
  std::string text = "Sure. Here is my reasoning [step one] then ";
  for (int i = 0; i < state.range(0); ++i) text += "{\"x\": [1, 2]} ";
  text += "[\"Ann Lee\", \"Bo Chan\"] done";
  for (auto _ : state) benchmark::DoNotOptimize(nerh::salvage_parse(text));
}
BENCHMARK(BM_SalvageParse)->Arg(1)->Arg(32);

void BM_PreprocessText(benchmark::State& state) {
  const std::string raw = article_text();
  for (auto _ : state) benchmark::DoNotOptimize(nerh::preprocess_text(raw));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * raw.size()));
}
BENCHMARK(BM_PreprocessText);

void BM_ComputeStats(benchmark::State& state) {
  std::vector<nerh::Article> arts(15);
  for (std::size_t i = 0; i < arts.size(); ++i) {
    arts[i].id = "a" + std::to_string(i);
    arts[i].body = nerh::preprocess_text(article_text());
  }
  for (auto _ : state) benchmark::DoNotOptimize(nerh::compute_stats(arts));
}
BENCHMARK(BM_ComputeStats);

}  // namespace
BENCHMARK_MAIN();
