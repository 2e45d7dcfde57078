#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "realface/error.hpp"
#include "realface/matcher.hpp"
#include "realface/rng.hpp"
#include "support.hpp"

namespace rf = realface;

namespace {

std::vector<rf::GalleryEntry> random_entries(std::mt19937_64& rng, std::size_t n, Eigen::Index d) {
  std::vector<rf::GalleryEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"p" + std::to_string(i), rf::FaceVector(rf::testing::uniform_vector(rng, d))});
  }
  return out;
}

}  // namespace

TEST(Threshold, NineCaseMatrix) {
  struct Case {
    rf::Polarity polarity;
    double score;
    double theta;
    bool pass;
  };
  // Inclusive at the threshold; distance passes below, confidence above.
  const Case cases[] = {
      {rf::Polarity::distance, 0.49, 0.50, true},    {rf::Polarity::distance, 0.50, 0.50, true},
      {rf::Polarity::distance, 0.51, 0.50, false},   {rf::Polarity::distance, 0.44, 0.45, true},
      {rf::Polarity::distance, 0.45, 0.45, true},    {rf::Polarity::distance, 0.46, 0.45, false},
      {rf::Polarity::confidence, 0.64, 0.65, false}, {rf::Polarity::confidence, 0.65, 0.65, true},
      {rf::Polarity::confidence, 0.66, 0.65, true},
  };
  for (const auto& c : cases) {
    EXPECT_EQ(rf::passes({"x", c.score, c.polarity}, {c.polarity, c.theta}), c.pass)
        << rf::to_string(c.polarity) << " " << c.score;
  }
  EXPECT_THROW(rf::passes({"x", 0.1, rf::Polarity::distance}, {rf::Polarity::confidence, 0.5}), rf::PolarityError);
}

TEST(Threshold, NormalizedScoresAreLowerIsBetter) {
  EXPECT_DOUBLE_EQ(rf::normalized_score({"x", 0.3, rf::Polarity::distance}), 0.3);
  EXPECT_DOUBLE_EQ(rf::normalized_score({"x", 0.8, rf::Polarity::confidence}), 1.0 - 0.8);
  EXPECT_DOUBLE_EQ(rf::normalized_threshold({rf::Polarity::confidence, 0.65}), 1.0 - 0.65);
}

TEST(Metric, PairScoresMatchDefinitions) {
  const Eigen::Vector3d a(1, 0, 0), b(0, 3, 4);
  EXPECT_DOUBLE_EQ(rf::pair_score(a, b, rf::Metric::euclidean), std::sqrt(1 + 9 + 16));
  EXPECT_DOUBLE_EQ(rf::pair_score(a, b, rf::Metric::cosine), 1.0);
  EXPECT_DOUBLE_EQ(rf::pair_score(b, 2 * b, rf::Metric::cosine), 0.0);
  EXPECT_DOUBLE_EQ(rf::pair_score(a, b, rf::Metric::confidence), 1.0 / (1.0 + std::sqrt(26.0)));
  EXPECT_THROW(rf::pair_score(a, Eigen::Vector3d::Zero(), rf::Metric::cosine), rf::DegenerateVector);
  EXPECT_EQ(rf::polarity_of(rf::Metric::confidence), rf::Polarity::confidence);
  EXPECT_EQ(rf::parse_metric("cosine"), rf::Metric::cosine);
  EXPECT_THROW(rf::parse_metric("hamming"), rf::ParseError);
}

TEST(Match, AgreesWithExhaustiveSearch) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  for (int trial = 0; trial < 100; ++trial) {
    const auto entries = random_entries(rng, size(rng), 24);
    const auto probe = rf::testing::uniform_vector(rng, 24);
    for (auto metric : {rf::Metric::euclidean, rf::Metric::cosine, rf::Metric::confidence}) {
      const auto gallery = rf::enroll(entries, rf::EmbeddingSpec::raw());
      // Exhaustive reference written independently of pair_score.
      std::size_t best = 0;
      double best_key = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const Eigen::VectorXd& t = entries[i].face.data;
        double key = (probe - t).norm();
        if (metric == rf::Metric::cosine) key = -probe.dot(t) / (probe.norm() * t.norm());
        if (key < best_key) best_key = key, best = i;
      }
      const auto m = rf::match(gallery, probe, metric);
      EXPECT_EQ(m.id, entries[best].identity) << "trial " << trial;
    }
  }
}

TEST(Match, TiesGoToTheEarliestEntry) {
  const std::vector<rf::GalleryEntry> e{{"a", rf::FaceVector(Eigen::Vector2d(1, 0))},
                                        {"b", rf::FaceVector(Eigen::Vector2d(-1, 0))}};
  const auto g = rf::enroll(e, rf::EmbeddingSpec::raw());
  EXPECT_EQ(rf::match(g, Eigen::Vector2d(0, 1), rf::Metric::euclidean).id, "a");
}

TEST(Enroll, RejectsDuplicatesEmptyAndMixedShapes) {
  EXPECT_THROW(rf::enroll({}, rf::EmbeddingSpec::raw()), rf::EmptyGallery);
  EXPECT_THROW(rf::enroll({{"a", rf::FaceVector(Eigen::Vector2d(1, 0))}, {"a", rf::FaceVector(Eigen::Vector2d(0, 1))}},
                          rf::EmbeddingSpec::raw()),
               rf::DuplicateIdentity);
  EXPECT_THROW(rf::enroll({{"a", rf::FaceVector(Eigen::Vector2d(1, 0))}, {"b", rf::FaceVector(Eigen::Vector3d(0, 1, 0))}},
                          rf::EmbeddingSpec::raw()),
               rf::ShapeError);
  const auto g = rf::enroll({{"a", rf::FaceVector(Eigen::Vector2d(1, 0))}}, rf::EmbeddingSpec::raw());
  EXPECT_THROW(rf::match(g, Eigen::Vector3d(1, 0, 0), rf::Metric::euclidean), rf::ShapeError);
}

TEST(Enroll, PcaEmbeddingProjectsOntoOrthonormalComponents) {
  std::mt19937_64 rng(5);
  const auto entries = random_entries(rng, 12, 30);
  const auto g = rf::enroll(entries, rf::EmbeddingSpec::pca(4));
  const auto& emb = g.embedding();
  ASSERT_TRUE(emb.fitted());
  const Eigen::MatrixXd gram = emb.components.transpose() * emb.components;
  EXPECT_LE((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(g.templates()[0].features.size(), 4);
  // Full-rank pca keeps every pairwise distance among the enrolled faces.
  const auto full = rf::enroll(entries, rf::EmbeddingSpec::pca(11));
  const double raw = (entries[2].face.data - entries[7].face.data).norm();
  EXPECT_NEAR((full.templates()[2].features - full.templates()[7].features).norm(), raw, 1e-9);
  EXPECT_THROW(rf::enroll(entries, rf::EmbeddingSpec::pca(12)), rf::RankDeficient);
}

TEST(ScoreDistribution, DuplicateProbesHaveZeroGenuineDistance) {
  std::mt19937_64 rng(8);
  const auto entries = random_entries(rng, 6, 10);
  const auto dist = rf::genuine_impostor(rf::enroll(entries, rf::EmbeddingSpec::raw()), entries, rf::Metric::euclidean);
  ASSERT_EQ(dist.genuine.size(), 6u);
  ASSERT_EQ(dist.impostor.size(), 30u);
  for (double s : dist.genuine) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(dist.eer, 0.0);
}

TEST(ScoreDistribution, UnknownProbeIdentity) {
  std::mt19937_64 rng(8);
  const auto entries = random_entries(rng, 3, 10);
  const auto g = rf::enroll(entries, rf::EmbeddingSpec::raw());
  EXPECT_THROW(rf::genuine_impostor(g, {{"stranger", entries[0].face}}, rf::Metric::euclidean), rf::UnknownIdentity);
}

TEST(Eer, HandComputedCases) {
  // Separated sets.
  EXPECT_EQ(rf::equal_error_rate({0.1, 0.2}, {0.5, 0.6}, rf::Polarity::distance), 0.0);
  // FAR meets FRR exactly at 0.4: FAR = FRR = 1/3.
  EXPECT_NEAR(rf::equal_error_rate({0.1, 0.3, 0.5}, {0.4, 0.6, 0.8}, rf::Polarity::distance), 1.0 / 3, 1e-12);
  // Crossing between t=0.3 (FAR 1/4, FRR 1/3) and t=0.4 (FAR 1/2, FRR 1/3):
  // difference goes -1/12 -> 1/6, so a third of the way: 1/4 + (1/3)(1/4) = 1/3.
  EXPECT_NEAR(rf::equal_error_rate({0.1, 0.2, 0.6}, {0.3, 0.4, 0.5, 0.7}, rf::Polarity::distance), 1.0 / 3, 1e-12);
  // Confidence polarity mirrors distance via 1 - s.
  EXPECT_NEAR(rf::equal_error_rate({0.9, 0.8, 0.4}, {0.7, 0.6, 0.5, 0.3}, rf::Polarity::confidence), 1.0 / 3, 1e-12);
  EXPECT_THROW(rf::equal_error_rate({}, {0.1}, rf::Polarity::distance), rf::SpecError);
}

TEST(Eer, OperatingPointsStartAtRejectAll) {
  const auto pts = rf::operating_points({0.1}, {0.2}, rf::Polarity::distance);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0].far, 0.0);
  EXPECT_EQ(pts[0].frr, 1.0);
  EXPECT_EQ(pts[2].far, 1.0);
  EXPECT_EQ(pts[2].frr, 0.0);
}

TEST(GalleryManifest, LoadsMatrixRowsAndEmbedding) {
  const auto dir = rf::testing::scratch_dir("gallery");
  std::ofstream(dir / "g.csv") << "0.1,0.2,0.3,0.4\n0.5,0.6,0.7,0.8\n0.2,0.1,0.9,0.3\n";
  std::ofstream(dir / "g.json") << R"({"d": 4, "width": 2, "height": 2, "matrix": "g.csv",
      "identities": [{"id": "ann", "row": 1}, {"id": "bob", "row": 0}, {"id": "cy"}],
      "embedding": {"kind": "pca-k", "k": 2}})";
  const auto m = rf::load_gallery_manifest(dir / "g.json");
  ASSERT_EQ(m.faces.size(), 3u);
  EXPECT_EQ(m.faces[0].identity, "ann");
  EXPECT_DOUBLE_EQ(m.faces[0].face.data[0], 0.5);
  EXPECT_DOUBLE_EQ(m.faces[2].face.data[2], 0.9);
  EXPECT_EQ(m.embedding.kind, rf::EmbeddingSpec::Kind::pca);
  EXPECT_EQ(m.embedding.k, 2);
  std::ofstream(dir / "bad.json") << R"({"d": 3, "matrix": "g.csv", "identities": [{"id": "x"}]})";
  EXPECT_THROW(rf::load_gallery_manifest(dir / "bad.json"), rf::ShapeError);
  std::filesystem::remove_all(dir);
}
