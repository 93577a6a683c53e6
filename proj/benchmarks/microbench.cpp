#include <benchmark/benchmark.h>

#include <random>

#include "fixtures.hpp"
#include "mailintent/diffkit.hpp"
#include "mailintent/hydra.hpp"
#include "mailintent/network.hpp"
#include "mailintent/synthetic.hpp"
#include "mailintent/weaklabel.hpp"

using namespace mailintent;

namespace {

encoder::TokenSequence random_sequence(std::size_t length, std::size_t vocab, std::size_t max_len,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<int> tok(2, static_cast<int>(vocab) - 1);
  encoder::TokenSequence s;
  s.true_length = std::min(length, max_len);
  for (std::size_t i = 0; i < s.true_length; ++i) s.ids.push_back(tok(rng));
  s.ids.resize(max_len, encoder::kPad);
  return s;
}

void forward_backward(benchmark::State& state, encoder::EncoderKind kind) {
  NetworkConfig cfg;
  cfg.encoder = {.kind = kind, .vocab_size = 5000, .embed_dim = 50, .hidden = 64, .max_len = 128};
  cfg.num_heads = 2;
  Network net(cfg, 1);
  std::mt19937_64 rng(2);
  const auto seq = random_sequence(static_cast<std::size_t>(state.range(0)), 5000, 128, rng);
  const std::vector<double> target{0.0, 1.0};
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.accumulate(seq, 0, target, 1.0));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_AvgEmbForwardBackward(benchmark::State& state) { forward_backward(state, encoder::EncoderKind::AvgEmb); }
void BM_BiLstmForwardBackward(benchmark::State& state) { forward_backward(state, encoder::EncoderKind::BiLSTM); }

void BM_AdadeltaStep(benchmark::State& state) {
  diffkit::ParamStore store;
  store.add("embedding", {5000, 50}, true);
  store.add("dense", {static_cast<std::size_t>(state.range(0))});
  diffkit::Adadelta opt(store);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> row(0, 4999);
  for (auto _ : state) {
    for (int k = 0; k < 32; ++k) {
      auto g = store[0].grad_row(row(rng));
      for (auto& v : g) v += 0.01;
    }
    std::fill(store[1].grad.begin(), store[1].grad.end(), 0.01);
    opt.step(store);
  }
}

void BM_LabelingFunctions(benchmark::State& state) {
  auto spec = synthetic::SyntheticSpec{};
  spec.num_threads = static_cast<std::size_t>(state.range(0));
  const auto syn = synthetic::generate_synthetic(spec);
  for (auto _ : state) {
    for (auto intent : {Intent::RequestInformation, Intent::ScheduleMeeting, Intent::PromiseAction}) {
      benchmark::DoNotOptimize(weaklabel::label_intent(syn.corpus, intent));
    }
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(syn.corpus.size()));
}

void BM_SelectWeak(benchmark::State& state) {
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> e(1.0);
  std::vector<double> losses(static_cast<std::size_t>(state.range(0)));
  for (auto& l : losses) l = e(rng);
  for (auto _ : state) benchmark::DoNotOptimize(hydra::select_weak(losses, 1.0, 1.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_AvgEmbForwardBackward)->Arg(16)->Arg(128);
BENCHMARK(BM_BiLstmForwardBackward)->Arg(16)->Arg(128);
BENCHMARK(BM_AdadeltaStep)->Arg(1024)->Arg(65536);
BENCHMARK(BM_LabelingFunctions)->Arg(1000)->Arg(10000);
BENCHMARK(BM_SelectWeak)->Arg(1000)->Arg(100000);

BENCHMARK_MAIN();
