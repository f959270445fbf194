#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "support/fixtures.hpp"
#include "tinyalign/aligner.hpp"
#include "tinyalign/trainer.hpp"

using namespace tinyalign;
using Catch::Matchers::WithinAbs;

namespace {

const std::string kSrc{kSourceLanguage};
const std::string kTgt{kTargetLanguage};

TrainConfig fixture_config(std::size_t iterations) {
  TrainConfig cfg;
  cfg.iterations = iterations;
  cfg.learning_rate = 1e-3;
  cfg.dropout_rate = 0.0;
  cfg.objective.tau = 0.05;
  cfg.objective.alpha = 1.0;
  return cfg;
}

bool stores_equal(const EmbeddingStore& a, const EmbeddingStore& b,
                  const std::string& lang) {
  if (a.words(lang) != b.words(lang)) return false;
  for (const std::string& w : a.words(lang)) {
    if (a.vector_at(lang, w) != b.vector_at(lang, w)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("apply_dropout") {
  const std::vector<std::vector<double>> vectors{{1.0, -2.0, 3.0},
                                                 {0.5, 0.25, -0.125}};
  SECTION("rate 0 is the identity") {
    CHECK(apply_dropout(vectors, 0.0, 99, 3) == vectors);
  }
  SECTION("same seed and iteration give identical masks") {
    CHECK(apply_dropout(vectors, 0.5, 7, 11) ==
          apply_dropout(vectors, 0.5, 7, 11));
    CHECK(apply_dropout(vectors, 0.5, 7, 11) !=
          apply_dropout(vectors, 0.5, 7, 12));
  }
  SECTION("survivors are scaled by 1/(1-rate)") {
    const auto out = apply_dropout(vectors, 0.5, 1, 0);
    for (std::size_t s = 0; s < vectors.size(); ++s) {
      for (std::size_t k = 0; k < vectors[s].size(); ++k) {
        const bool zeroed = out[s][k] == 0.0;
        if (!zeroed) {
          CHECK_THAT(out[s][k], WithinAbs(vectors[s][k] * 2.0, 1e-15));
        }
      }
    }
  }
  SECTION("Monte Carlo mean recovers the input within 2%") {
    const std::vector<std::vector<double>> input{{1.0, -2.0, 3.0, 0.5}};
    std::vector<double> mean(4, 0.0);
    const int samples = 20000;
    for (int it = 0; it < samples; ++it) {
      const auto out = apply_dropout(input, 0.5, 424242, it);
      for (std::size_t k = 0; k < 4; ++k) mean[k] += out[0][k];
    }
    for (std::size_t k = 0; k < 4; ++k) {
      mean[k] /= samples;
      CHECK(std::abs(mean[k] - input[0][k]) <=
            0.02 * std::abs(input[0][k]));
    }
  }
  SECTION("bad rate throws") {
    CHECK_THROWS_AS(apply_dropout(vectors, 1.0, 0, 0), UsageError);
  }
}

TEST_CASE("adam_step") {
  TrainConfig cfg;
  cfg.learning_rate = 0.01;

  SECTION("zero gradient at step 1 leaves parameters unchanged") {
    std::vector<double> params{1.0, -2.0};
    std::vector<double> grads{0.0, 0.0};
    AdamMoments moments;
    adam_step(params, grads, moments, 1, cfg);
    CHECK(params == std::vector<double>{1.0, -2.0});
  }
  SECTION("step 1 from zero moments moves by lr*g/(|g|+eps)") {
    std::vector<double> params{1.0, 1.0};
    std::vector<double> grads{0.5, -0.25};
    AdamMoments moments;
    adam_step(params, grads, moments, 1, cfg);
    CHECK_THAT(params[0],
               WithinAbs(1.0 - 0.01 * 0.5 / (0.5 + cfg.adam_epsilon), 1e-15));
    CHECK_THAT(params[1],
               WithinAbs(1.0 + 0.01 * 0.25 / (0.25 + cfg.adam_epsilon),
                         1e-15));
  }
  SECTION("constant gradient drives steps toward lr*sign(g)") {
    std::vector<double> params{0.0};
    std::vector<double> grads{0.37};
    AdamMoments moments;
    double previous = params[0];
    for (std::size_t step = 1; step <= 1000; ++step) {
      adam_step(params, grads, moments, step, cfg);
      const double update = params[0] - previous;
      previous = params[0];
      CHECK_THAT(std::abs(update), WithinAbs(cfg.learning_rate, 1e-6));
      CHECK(update < 0.0);  // descending against a positive gradient
    }
  }
}

TEST_CASE("finetune with zero iterations is a no-op") {
  fixtures::SyntheticFixture fixture = fixtures::make_ambiguity_fixture();
  const EmbeddingStore before = fixture.store;
  const TrainingTrace trace =
      finetune(fixture.store, fixture.corpus, fixture_config(0));
  CHECK(trace.rows.empty());
  CHECK(stores_equal(before, fixture.store, kSrc));
  CHECK(stores_equal(before, fixture.store, kTgt));
  CHECK(fixture.store.size(kSrc) == before.size(kSrc));
}

TEST_CASE("finetune is deterministic for a fixed seed") {
  TrainConfig cfg = fixture_config(25);
  cfg.dropout_rate = 0.5;
  cfg.seed = 12345;

  fixtures::SyntheticFixture a = fixtures::make_ambiguity_fixture();
  finetune(a.store, a.corpus, cfg);
  fixtures::SyntheticFixture b = fixtures::make_ambiguity_fixture();
  finetune(b.store, b.corpus, cfg);
  CHECK(stores_equal(a.store, b.store, kSrc));
  CHECK(stores_equal(a.store, b.store, kTgt));

  fixtures::SyntheticFixture c = fixtures::make_ambiguity_fixture();
  TrainConfig other = cfg;
  other.seed = 54321;
  finetune(c.store, c.corpus, other);
  CHECK_FALSE(stores_equal(a.store, c.store, kSrc));
}

TEST_CASE("finetune descends and resolves the planted ambiguity") {
  // Five-pair variant of the synthetic fixture, dropout 0, tau 0.05.
  fixtures::SyntheticFixture fixture = fixtures::make_ambiguity_fixture(5);

  const auto initial_masks =
      build_retention_masks(fixture.store, fixture.corpus);
  // The baseline must not link "answer" anywhere: its argmax goes to
  // "frage" while "frage" prefers "question".
  for (const auto& mask : initial_masks) {
    for (const auto& [i, j] : mask.links) {
      CHECK(fixture.corpus.pairs[mask.pair_id].source.tokens[i] != "answer");
    }
  }

  const TrainingTrace trace =
      finetune(fixture.store, fixture.corpus, fixture_config(200));
  REQUIRE(trace.rows.size() == 200);
  for (std::size_t k = 1; k < 20; ++k) {
    CHECK(trace.rows[k].total < trace.rows[k - 1].total);
  }

  // After training the intersection alignment links answer to antwort in
  // every pair that contains the ambiguity.
  const auto alignments = align_corpus(fixture.store, fixture.corpus,
                                       Symmetrization::Intersection);
  for (const auto& pair : fixture.corpus.pairs) {
    for (std::size_t i = 0; i < pair.source.size(); ++i) {
      if (pair.source.tokens[i] != "answer") continue;
      bool found = false;
      for (std::size_t j = 0; j < pair.target.size(); ++j) {
        if (pair.target.tokens[j] == "antwort" &&
            alignments[pair.pair_id].links.count({i, j})) {
          found = true;
        }
      }
      INFO("pair " << pair.pair_id);
      CHECK(found);
    }
  }
}

TEST_CASE("finetune touches only corpus parameter slots") {
  fixtures::SyntheticFixture fixture = fixtures::make_ambiguity_fixture(5);
  fixture.store.add_entry(kSrc, "bystander", {1, 0, 0, 0, 0, 0, 0, 0, 0, 0,
                                              0, 0});
  const std::vector<double> bystander_before =
      fixture.store.vector_at(kSrc, "bystander");
  finetune(fixture.store, fixture.corpus, fixture_config(10));
  CHECK(fixture.store.vector_at(kSrc, "bystander") == bystander_before);
  CHECK_FALSE(fixture.store.is_trainable(kSrc, "bystander"));
  // Corpus words did move.
  CHECK(fixture.store.is_trainable(kSrc, "answer"));
}

TEST_CASE("retention masks are built once from the initial store") {
  fixtures::SyntheticFixture fixture = fixtures::make_ambiguity_fixture(5);
  const auto align_before = build_retention_masks(fixture.store,
                                                  fixture.corpus);
  TrainConfig cfg = fixture_config(50);
  cfg.objective.alpha = 10.0;
  finetune(fixture.store, fixture.corpus, cfg);
  // With a strong retention weight, the anchored links survive training:
  // every initial link is still in the fine-tuned intersection.
  const auto alignments = align_corpus(fixture.store, fixture.corpus,
                                       Symmetrization::Intersection);
  std::size_t kept = 0, total = 0;
  for (const auto& mask : align_before) {
    for (const auto& link : mask.links) {
      ++total;
      if (alignments[mask.pair_id].links.count(link)) ++kept;
    }
  }
  CHECK(total > 0);
  CHECK(kept == total);
}

TEST_CASE("non-finite loss aborts with the iteration index") {
  fixtures::SyntheticFixture fixture = fixtures::make_ambiguity_fixture(3);
  fixture.store.mutable_vector(kSrc, "question")[0] =
      std::numeric_limits<double>::infinity();
  try {
    finetune(fixture.store, fixture.corpus, fixture_config(5));
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.iteration() == 1);
  }
}
