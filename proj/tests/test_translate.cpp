#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "ghost/autograd/gradcheck.hpp"
#include "ghost/autograd/ops.hpp"
#include "ghost/error.hpp"
#include "ghost/optics/bucket.hpp"
#include "ghost/optics/speckle.hpp"
#include "ghost/translate/tokens.hpp"
#include "ghost/translate/trainer.hpp"
#include "ghost/translate/translate.hpp"
#include "support.hpp"

using namespace ghost;
using namespace ghost::gt;
using data::Image;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

ModelConfig tiny_config(std::size_t side, std::size_t k, std::size_t d = 16) {
  ModelConfig c;
  c.n_enc_layers = 1;
  c.n_dec_layers = 1;
  c.d_model = d;
  c.n_heads = 2;
  c.image_width = side;
  c.image_height = side;
  c.max_src_len = k;
  return c;
}

struct Toy {
  std::vector<Image> images;
  std::vector<optics::BucketSequence> buckets;
  std::vector<Sample> samples;
};

Toy make_toy(std::size_t side, std::size_t k, std::size_t count, std::uint64_t seed, double density = 0.3) {
  std::mt19937_64 rng(seed);
  const auto patterns = optics::gen_pink_speckles(data::SamplingConfig::with_patterns(side * side, k), 1.0, seed);
  Toy toy;
  while (toy.images.size() < count) {
    Image img = testing::random_binary(side, side, rng, density);
    auto raw = optics::compute_bucket_signals(patterns, img);
    if (*std::ranges::max_element(raw.values) == *std::ranges::min_element(raw.values)) continue;
    auto b = optics::normalize_buckets(raw);
    toy.samples.push_back({b.values, tokenize_image(img)});
    toy.buckets.push_back(std::move(b));
    toy.images.push_back(std::move(img));
  }
  return toy;
}

std::vector<double> values(const ag::Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("tokenize examples") {
  const Vocabulary vocab{16};
  CHECK(tokenize_image(Image(4, 4, 0.0)) == TokenSeq{vocab.bos(), vocab.eos()});
  Image corner(4, 4, 0.0);
  corner(0, 0) = 1.0;
  CHECK(tokenize_image(corner) == TokenSeq{17, 1, 18});
  Image last(4, 4, 0.0);
  last(3, 3) = 1.0;
  last(1, 2) = 1.0;
  CHECK(tokenize_image(last) == TokenSeq{17, 7, 16, 18});
  CHECK(code_of([] { tokenize_image(Image(2, 2, 0.5)); }) == ErrorCode::NonBinaryImage);
}

TEST_CASE("detokenize inverts tokenize and tolerates duplicates") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const Image img = testing::random_binary(6, 5, rng, 0.1 + 0.02 * t);
    const auto seq = tokenize_image(img);
    CHECK(is_valid_sequence(seq, Vocabulary{30}));
    CHECK(detokenize(seq, 6, 5) == img);
  }
  const TokenSeq dup{17, 3, 3, 1, 18};
  const TokenSeq once{17, 1, 3, 18};
  CHECK(detokenize(dup, 4, 4) == detokenize(once, 4, 4));
  CHECK(detokenize(TokenSeq{17, 2, 18, 5}, 4, 4) == detokenize(TokenSeq{17, 2, 18}, 4, 4));
  CHECK(code_of([] { detokenize(TokenSeq{17, 19, 18}, 4, 4); }) == ErrorCode::TokenOutOfRange);
  CHECK(code_of([] { detokenize(TokenSeq{17, -1, 18}, 4, 4); }) == ErrorCode::TokenOutOfRange);
}

TEST_CASE("sequence validity") {
  const Vocabulary v{16};
  CHECK(is_valid_sequence(TokenSeq{17, 2, 9, 18, 0, 0}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{2, 9, 18}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{17, 9, 2, 18}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{17, 9, 9, 18}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{17, 9}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{17, 0, 18}, v));
  CHECK_FALSE(is_valid_sequence(TokenSeq{17, 18, 4}, v));
}

TEST_CASE("batch padding") {
  const auto equal = batch_pad({{17, 1, 18}, {17, 2, 18}});
  CHECK(equal.tokens == std::vector<Token>{17, 1, 18, 17, 2, 18});
  CHECK(std::ranges::all_of(equal.mask, [](auto m) { return m == 1; }));

  const auto ragged = batch_pad({{17, 1, 18}, {17, 1, 2, 3, 18}});
  CHECK(ragged.rows == 2);
  CHECK(ragged.cols == 5);
  CHECK(ragged.tokens == std::vector<Token>{17, 1, 18, 0, 0, 17, 1, 2, 3, 18});
  CHECK(ragged.mask == std::vector<std::uint8_t>{1, 1, 1, 0, 0, 1, 1, 1, 1, 1});
}

TEST_CASE("model config validation") {
  auto c = tiny_config(4, 4);
  c.n_heads = 3;
  CHECK_THROWS_AS(GhostTransformer(c, 0), Error);
  c = tiny_config(4, 4);
  c.d_model = 0;
  CHECK_THROWS_AS(GhostTransformer(c, 0), Error);
  const ModelConfig defaults;
  CHECK(defaults.n_enc_layers == 6);
  CHECK(defaults.n_dec_layers == 6);
  CHECK(defaults.d_model == 512);
  CHECK(defaults.n_heads == 8);
  CHECK(defaults.ff_dim() == 2048);
  CHECK(defaults.vocab_size() == 1027);
  CHECK(defaults.max_tgt_len() == 1026);
}

TEST_CASE("initialization") {
  GhostTransformer m(tiny_config(4, 4), 3);
  for (const auto& [name, t] : m.named_parameters()) {
    const auto v = t.data();
    if (name.ends_with(".gain")) {
      CHECK(std::ranges::all_of(v, [](double x) { return x == 1.0; }));
    } else if (name.ends_with(".b") || name.ends_with(".bias")) {
      CHECK(std::ranges::all_of(v, [](double x) { return x == 0.0; }));
    } else {
      const double bound = std::sqrt(6.0 / double(t.dim(0) + t.dim(1)));
      CHECK(std::ranges::all_of(v, [&](double x) { return std::abs(x) <= bound; }));
      CHECK(std::ranges::any_of(v, [](double x) { return x != 0.0; }));
    }
  }
  GhostTransformer same(tiny_config(4, 4), 3);
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i) {
    CHECK(values(m.named_parameters()[i].second) == values(same.named_parameters()[i].second));
  }
}

TEST_CASE("forward shape and length limits") {
  GhostTransformer m(tiny_config(4, 4), 1);
  const std::vector<double> src{0.1, 0.5, 0.9, 0.0};
  const TokenSeq tgt{17, 2, 5, 18};
  const auto logits = m.forward(src, tgt);
  CHECK(logits.shape() == ag::Shape{3, 19});
  const std::vector<double> too_long(5, 0.5);
  CHECK(code_of([&] { m.forward(too_long, tgt); }) == ErrorCode::SourceTooLong);
  TokenSeq long_tgt(19, 1);
  long_tgt[0] = 17;
  CHECK(code_of([&] { m.forward(src, long_tgt); }) == ErrorCode::TargetTooLong);
}

TEST_CASE("causal mask: later target tokens do not affect earlier logits") {
  GhostTransformer m(tiny_config(4, 4), 2);
  const std::vector<double> src{0.2, 0.8, 0.4, 1.0};
  const TokenSeq a{17, 1, 4, 9, 12, 18};
  for (std::size_t t = 1; t + 1 < a.size(); ++t) {
    TokenSeq b = a;
    b[t] = 15;
    const auto la = values(m.forward(src, a)), lb = values(m.forward(src, b));
    const std::size_t V = 19;
    for (std::size_t pos = 0; pos < t; ++pos)
      for (std::size_t v = 0; v < V; ++v) CHECK(la[pos * V + v] == lb[pos * V + v]);
    bool changed = false;
    for (std::size_t v = 0; v < V; ++v) changed |= la[t * V + v] != lb[t * V + v];
    CHECK(changed);
  }
}

TEST_CASE("swapping two source positions changes the logits") {
  GhostTransformer m(tiny_config(4, 4), 4);
  const std::vector<double> src{0.1, 0.9, 0.4, 0.6};
  const std::vector<double> swapped{0.9, 0.1, 0.4, 0.6};
  const TokenSeq tgt{17, 3, 18};
  const auto a = values(m.forward(src, tgt)), b = values(m.forward(swapped, tgt));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::abs(a[i] - b[i]));
  CHECK(diff > 1e-6);
}

TEST_CASE("zero output projection gives a uniform distribution") {
  GhostTransformer m(tiny_config(4, 4), 5);
  for (double& v : m.parameter("out_proj.w").data()) v = 0.0;
  const auto logits = m.forward(std::vector<double>{0.3, 0.2, 0.9, 0.1}, TokenSeq{17, 2, 3, 18});
  const auto p = ag::softmax(logits);
  for (double v : p.data()) CHECK(v == doctest::Approx(1.0 / 19.0).epsilon(1e-14));
}

TEST_CASE("attention weights are distributions") {
  GhostTransformer m(tiny_config(4, 4), 6);
  ForwardTrace trace;
  m.forward(std::vector<double>{0.3, 0.2, 0.9, 0.1}, TokenSeq{17, 2, 3, 11, 18}, &trace);
  REQUIRE(trace.attention.size() == 3);
  for (const auto& probs : trace.attention) {
    const std::size_t tk = probs.dim(-1);
    const auto v = probs.data();
    for (std::size_t r = 0; r < v.size() / tk; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < tk; ++c) {
        CHECK(v[r * tk + c] >= 0.0);
        s += v[r * tk + c];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("incremental decoding matches full decoding") {
  GhostTransformer m(tiny_config(4, 4), 7);
  const std::vector<double> src{0.3, 0.2, 0.9, 0.1, 0.0, 1.0, 0.5, 0.5};
  const std::vector<Token> inputs{17, 2, 3, 11, 17, 5, 6, 7};
  const auto memory = m.encode(src, 2);
  const auto full = values(m.decode(memory, inputs, 2));
  auto cache = m.start_decoding(memory);
  const std::size_t V = 19;
  for (std::size_t t = 0; t < 4; ++t) {
    const std::vector<Token> step{inputs[t], inputs[4 + t]};
    const auto logits = values(m.decode_step(cache, step));
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t v = 0; v < V; ++v) CHECK(std::abs(logits[b * V + v] - full[(b * 4 + t) * V + v]) < 1e-10);
  }
}

TEST_CASE("end-to-end gradient check on a tiny model") {
  // d=16, 1+1 layers, K=4, V=19
  GhostTransformer m(tiny_config(4, 4), 8);
  CHECK(m.config().vocab_size() == 19);
  const auto toy = make_toy(4, 4, 3, 8);
  // nonzero biases and shifts so their gradients are exercised away from init
  std::mt19937_64 rng(8);
  for (auto& [name, t] : m.named_parameters()) {
    if (name.ends_with(".b") || name.ends_with(".bias")) {
      auto p = t;
      for (double& v : p.data()) v = testing::random_vector(1, rng, -0.1, 0.1)[0];
    }
  }
  std::vector<const Sample*> batch;
  for (const auto& s : toy.samples) batch.push_back(&s);
  const auto res = ag::grad_check([&] { return batch_loss(m, batch); }, m.parameters(), 1e-5, 1e-5);
  INFO("max rel error " << res.max_rel_error << " at param " << m.named_parameters()[res.worst_param].first);
  CHECK(res.max_rel_error < 1e-3);
  CHECK(res.checked == m.parameter_count());
}

TEST_CASE("padded batch loss equals the per-sequence loop") {
  GhostTransformer m(tiny_config(4, 4), 9);
  auto toy = make_toy(4, 4, 4, 9);
  toy.samples[1].target = TokenSeq{17, 18};
  std::vector<const Sample*> batch;
  double weighted = 0.0, count = 0.0;
  for (const auto& s : toy.samples) {
    batch.push_back(&s);
    const auto logits = m.forward(s.source, s.target);
    const std::span<const Token> labels(s.target.begin() + 1, s.target.end());
    weighted += ag::cross_entropy_masked(logits, labels, Vocabulary::pad()).item() * double(labels.size());
    count += double(labels.size());
  }
  CHECK(batch_loss(m, batch).item() == doctest::Approx(weighted / count).epsilon(1e-12));
}

TEST_CASE("padding contributes exactly zero gradient") {
  GhostTransformer m(tiny_config(4, 4), 10);
  auto toy = make_toy(4, 4, 2, 10);
  toy.samples[0].target = TokenSeq{17, 3, 18};
  toy.samples[1].target = TokenSeq{17, 1, 2, 4, 8, 9, 18};
  auto grads = [&](const std::vector<Sample>& samples) {
    std::vector<const Sample*> batch;
    for (const auto& s : samples) batch.push_back(&s);
    for (auto p : m.parameters()) p.zero_grad();
    ag::Tape tape;
    ag::TapeScope scope(tape);
    ag::backward(batch_loss(m, batch));
    std::vector<std::vector<double>> out;
    for (const auto& p : m.parameters()) out.push_back(p.grad());
    return out;
  };
  // The short row's inputs after its EOS are PAD. Their labels are ignored
  // and the causal mask hides them from real positions, so rewriting them to
  // any other token must leave every gradient bit-identical.
  const auto padded = grads(toy.samples);
  std::vector<double> src;
  for (const auto& s : toy.samples) src.insert(src.end(), s.source.begin(), s.source.end());
  auto manual = [&](Token filler) {
    const std::vector<Token> inputs{17, 3, filler, filler, filler, filler, 17, 1, 2, 4, 8, 9};
    const std::vector<Token> labels{3, 18, 0, 0, 0, 0, 1, 2, 4, 8, 9, 18};
    for (auto p : m.parameters()) p.zero_grad();
    ag::Tape tape;
    ag::TapeScope scope(tape);
    const auto logits = m.decode(m.encode(src, 2), inputs, 2);
    ag::backward(ag::cross_entropy_masked(logits, labels, Vocabulary::pad()));
    std::vector<std::vector<double>> out;
    for (const auto& p : m.parameters()) out.push_back(p.grad());
    return out;
  };
  const auto with_pad = manual(0);
  CHECK(with_pad == padded);
  CHECK(manual(13) == with_pad);
}

TEST_CASE("memorizes one sample and translates it back") {
  GhostTransformer m(tiny_config(4, 4, 32), 11);
  const auto toy = make_toy(4, 4, 1, 11, 0.4);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.epochs = 300;
  cfg.adam.warmup_steps = 30;
  Trainer trainer(m, cfg);
  const auto& history = trainer.fit(toy.samples);
  CHECK(history.size() == 300);
  CHECK(history.back() < 0.01);
  CHECK(translate(m, toy.buckets[0]) == toy.images[0]);
}

TEST_CASE("training is deterministic given the seed") {
  const auto toy = make_toy(4, 4, 6, 12);
  auto run = [&] {
    GhostTransformer m(tiny_config(4, 4), 12);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.epochs = 3;
    cfg.seed = 99;
    Trainer t(m, cfg);
    return t.fit(toy.samples);
  };
  CHECK(run() == run());
}

TEST_CASE("dataset validation") {
  GhostTransformer m(tiny_config(4, 4), 13);
  CHECK(code_of([&] { validate_dataset(m, {}); }) == ErrorCode::EmptyDataset);
  std::vector<Sample> mixed{{{0.1, 0.2, 0.3, 0.4}, {17, 18}}, {{0.1, 0.2, 0.3}, {17, 18}}};
  CHECK(code_of([&] { validate_dataset(m, mixed); }) == ErrorCode::MixedSourceLengths);
  std::vector<Sample> short_k{{{0.1, 0.2, 0.3}, {17, 18}}};
  CHECK(code_of([&] { validate_dataset(m, short_k); }) == ErrorCode::SourceLengthMismatch);
  std::vector<Sample> bad_tokens{{{0.1, 0.2, 0.3, 0.4}, {17, 40, 18}}};
  CHECK(code_of([&] { validate_dataset(m, bad_tokens); }) == ErrorCode::TokenOutOfRange);
  TrainConfig cfg;
  cfg.epochs = 1;
  Trainer t(m, cfg);
  CHECK(code_of([&] { t.fit({}); }) == ErrorCode::EmptyDataset);
}

TEST_CASE("rigged EOS bias yields an empty image") {
  GhostTransformer m(tiny_config(4, 4), 14);
  m.parameter("out_proj.b").data()[m.config().vocabulary().eos()] = 1e6;
  CHECK(translate(m, optics::BucketSequence{{0.0, 0.3, 1.0, 0.2}, 0, true}) == Image(4, 4, 0.0));
}

TEST_CASE("translate outputs are valid binary images") {
  GhostTransformer m(tiny_config(4, 4), 15);
  const auto toy = make_toy(4, 4, 10, 15);
  for (bool monotonic : {false, true}) {
    DecodeOptions opts;
    opts.monotonic = monotonic;
    const auto seqs = greedy_decode(m, [&] {
      std::vector<double> s;
      for (const auto& x : toy.samples) s.insert(s.end(), x.source.begin(), x.source.end());
      return s;
    }(), toy.samples.size(), opts);
    for (const auto& seq : seqs) {
      CHECK(seq.front() == 17);
      CHECK(seq.back() == 18);
      CHECK(seq.size() <= m.config().max_tgt_len());
      if (monotonic) CHECK(is_valid_sequence(seq, m.config().vocabulary()));
    }
    for (const auto& img : translate_batch(m, toy.buckets, opts, 3)) {
      CHECK(img.is_binary());
      CHECK(img.width() == 4);
    }
  }
  // raw buckets are normalized on the way in
  auto raw = toy.buckets[0];
  for (double& v : raw.values) v = 3.0 * v + 7.0;
  raw.normalized = false;
  CHECK(translate(m, raw) == translate(m, toy.buckets[0]));
  CHECK(code_of([&] { translate(m, optics::BucketSequence{{0.0, 1.0}, 0, true}); }) ==
        ErrorCode::SourceLengthMismatch);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testing::scratch_dir("checkpoint");
  const auto toy = make_toy(4, 4, 6, 16);
  GhostTransformer m(tiny_config(4, 4), 16);
  TrainConfig cfg;
  cfg.batch_size = 3;
  cfg.epochs = 2;
  Trainer trainer(m, cfg);
  trainer.fit(toy.samples);
  save_checkpoint(dir / "m.ckpt", m, trainer.snapshot(), {{"config_hash", "abc123"}});

  auto loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(loaded.model.config() == m.config());
  CHECK(loaded.provenance.at("config_hash") == "abc123");
  for (std::size_t i = 0; i < m.named_parameters().size(); ++i) {
    CHECK(loaded.model.named_parameters()[i].first == m.named_parameters()[i].first);
    CHECK(values(loaded.model.named_parameters()[i].second) == values(m.named_parameters()[i].second));
  }
  const auto snap = trainer.snapshot();
  CHECK(loaded.training.first_moments == snap.first_moments);
  CHECK(loaded.training.second_moments == snap.second_moments);
  CHECK(loaded.training.loss_history == snap.loss_history);
  CHECK(loaded.training.adam_steps == snap.adam_steps);
  CHECK(loaded.training.epoch == 2);
  CHECK(translate_batch(loaded.model, toy.buckets) == translate_batch(m, toy.buckets));
}

TEST_CASE("checkpoint version and corruption errors") {
  const auto dir = testing::scratch_dir("checkpoint-errors");
  GhostTransformer m(tiny_config(4, 4), 17);
  save_checkpoint(dir / "m.ckpt", m);
  std::ifstream in(dir / "m.ckpt", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::string bumped = bytes;
  bumped.replace(bumped.find("version=1"), 9, "version=2");
  std::ofstream(dir / "v2.ckpt", std::ios::binary) << bumped;
  CHECK(code_of([&] { load_checkpoint(dir / "v2.ckpt"); }) == ErrorCode::VersionMismatch);

  std::string flipped = bytes;
  const auto payload = flipped.find('\n', flipped.find("name=param.out_proj.w")) + 9;
  flipped[payload] ^= 0x11;
  std::ofstream(dir / "flip.ckpt", std::ios::binary) << flipped;
  CHECK(code_of([&] { load_checkpoint(dir / "flip.ckpt"); }) == ErrorCode::CorruptCheckpoint);

  std::ofstream(dir / "cut.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK(code_of([&] { load_checkpoint(dir / "cut.ckpt"); }) == ErrorCode::CorruptCheckpoint);
}

TEST_CASE("resuming from a checkpoint reproduces the uninterrupted run") {
  const auto dir = testing::scratch_dir("resume");
  const auto toy = make_toy(4, 4, 10, 18);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.epochs = 4;
  cfg.seed = 5;
  cfg.adam.warmup_steps = 3;

  GhostTransformer straight(tiny_config(4, 4), 18);
  const auto full = Trainer(straight, cfg).fit(toy.samples);

  GhostTransformer first(tiny_config(4, 4), 18);
  auto half = cfg;
  half.epochs = 2;
  half.checkpoint_every = 2;
  half.checkpoint_path = dir / "half.ckpt";
  Trainer(first, half).fit(toy.samples);

  auto loaded = load_checkpoint(dir / "half.ckpt");
  Trainer resumed(loaded.model, cfg);
  resumed.restore(loaded.training);
  const auto history = resumed.fit(toy.samples);
  CHECK(history == full);
  for (std::size_t i = 0; i < straight.named_parameters().size(); ++i) {
    CHECK(values(loaded.model.named_parameters()[i].second) == values(straight.named_parameters()[i].second));
  }
}
