#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "embkit/encoder.hpp"
#include "embkit/errors.hpp"
#include "embkit/evalkit.hpp"
#include "support/fixtures.hpp"

using namespace embkit;

namespace {

Embedding basis(size_t dim, size_t axis) {
  Embedding e(dim, 0.0);
  e[axis] = 1.0;
  return e;
}

}  // namespace

TEST_SUITE("evalkit") {

TEST_CASE("a model that embeds queries onto their positives scores perfect retrieval") {
  fixtures::FakeModel model;
  std::vector<IdText> queries, corpus;
  std::map<std::string, std::map<std::string, double>> qrels;
  for (size_t i = 0; i < 3; ++i) {
    const std::string qt = "query " + std::to_string(i);
    const std::string dt = "doc " + std::to_string(i);
    queries.push_back({"q" + std::to_string(i), qt});
    corpus.push_back({"d" + std::to_string(i), dt});
    model.set(qt, basis(8, i));
    model.set(dt, basis(8, i));
    qrels["q" + std::to_string(i)]["d" + std::to_string(i)] = 1.0;
  }
  for (size_t i = 3; i < 6; ++i) {
    const std::string dt = "doc " + std::to_string(i);
    corpus.push_back({"d" + std::to_string(i), dt});
    model.set(dt, basis(8, i));
  }
  const auto r = eval_retrieval(queries, corpus, qrels, "find the doc", model.fn());
  CHECK(r.ndcg_at_10 == doctest::Approx(1.0));
  CHECK(r.recall_at_1 == doctest::Approx(1.0));
  CHECK(r.recall_at_10 == doctest::Approx(1.0));
  CHECK(r.evaluated_queries == 3);
}

TEST_CASE("random vectors land at chance-level recall@10") {
  std::mt19937_64 rng(404);
  fixtures::FakeModel model;
  std::vector<IdText> queries, corpus;
  std::map<std::string, std::map<std::string, double>> qrels;
  for (size_t i = 0; i < 1000; ++i) {
    const std::string dt = "chance doc " + std::to_string(i);
    corpus.push_back({"d" + std::to_string(i), dt});
    model.set(dt, fixtures::random_unit_vector(rng, 16));
  }
  for (size_t i = 0; i < 100; ++i) {
    const std::string qt = "chance query " + std::to_string(i);
    queries.push_back({"q" + std::to_string(i), qt});
    model.set(qt, fixtures::random_unit_vector(rng, 16));
    qrels["q" + std::to_string(i)]["d" + std::to_string(i * 10)] = 1.0;
  }
  const auto r = eval_retrieval(queries, corpus, qrels, "inst", model.fn(), 4);
  CHECK(std::fabs(r.recall_at_10 - 0.01) <= 0.02);
}

TEST_CASE("nDCG matches a hand-computed DCG table") {
  // q0: ranked d0(rel 3), d1(0), d2(rel 2), d3(rel 1), d4(0)
  //     DCG = 3 + 2/log2(4) + 1/log2(5); IDCG = 3 + 2/log2(3) + 1/log2(4)
  // q1: single relevant at rank 1 -> 1.0
  // q2: single relevant at rank 2 -> 1/log2(3)
  fixtures::FakeModel model;
  std::vector<IdText> queries = {{"q0", "query zero"}, {"q1", "query one"}, {"q2", "query two"}};
  std::vector<IdText> corpus;
  auto with_cos = [&](double c, size_t axis) {
    Embedding v(8, 0.0);
    v[0] = c;
    v[axis] = std::sqrt(1.0 - c * c);
    return v;
  };
  model.set("query zero", basis(8, 0));
  for (size_t i = 0; i < 5; ++i) {
    const std::string dt = "ranked doc " + std::to_string(i);
    corpus.push_back({"r" + std::to_string(i), dt});
    model.set(dt, with_cos(0.9 - 0.1 * static_cast<double>(i), 1 + i % 6));
  }
  model.set("query one", basis(8, 6));
  model.set("query two", with_cos(0.05, 7));  // nearest: r0..r4 beat p1 except...
  corpus.push_back({"p1", "perfect doc"});
  model.set("perfect doc", basis(8, 6));
  corpus.push_back({"p2", "second doc"});
  // query two: ranks "almost doc" first (cosine 1), relevant "second doc" second
  model.set("second doc", with_cos(0.30, 7));
  corpus.push_back({"p3", "almost doc"});
  model.set("almost doc", with_cos(0.05, 7));

  std::map<std::string, std::map<std::string, double>> qrels;
  qrels["q0"] = {{"r0", 3.0}, {"r2", 2.0}, {"r3", 1.0}};
  qrels["q1"] = {{"p1", 1.0}};
  qrels["q2"] = {{"p2", 1.0}};

  const double ndcg_q0 = 0.9304509197357168;  // hand table, verified numerically
  const double ndcg_q1 = 1.0;
  const double ndcg_q2 = 0.6309297535714574;  // 1/log2(3)
  const auto r = eval_retrieval(queries, corpus, qrels, "inst", model.fn());
  CHECK(r.ndcg_at_10 == doctest::Approx((ndcg_q0 + ndcg_q1 + ndcg_q2) / 3.0).epsilon(1e-12));
  CHECK(r.recall_at_1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(r.recall_at_10 == doctest::Approx(1.0));
}

TEST_CASE("queries without relevant docs are excluded and reported") {
  fixtures::FakeModel model;
  model.set("q", basis(4, 0));
  model.set("d", basis(4, 0));
  std::map<std::string, std::map<std::string, double>> qrels;
  qrels["a"] = {{"d0", 1.0}};
  const std::vector<IdText> queries = {{"a", "q"}, {"b", "q"}};
  const std::vector<IdText> corpus = {{"d0", "d"}};
  const auto r = eval_retrieval(queries, corpus, qrels, "i", model.fn());
  CHECK(r.evaluated_queries == 1);
  REQUIRE(r.skipped_queries.size() == 1);
  CHECK(r.skipped_queries[0] == "b");

  std::map<std::string, std::map<std::string, double>> none;
  CHECK_THROWS_AS(eval_retrieval(queries, corpus, none, "i", model.fn()), ValidationError);
}

namespace {

// pairs whose predicted cosine is exactly cos(theta_i)
std::vector<StsRecord> sts_pairs_with_cosines(fixtures::FakeModel& model,
                                              const std::vector<double>& cosines,
                                              const std::vector<double>& gold) {
  std::vector<StsRecord> pairs;
  for (size_t i = 0; i < cosines.size(); ++i) {
    const std::string a = "left " + std::to_string(i);
    const std::string b = "right " + std::to_string(i);
    Embedding va(4, 0.0);
    va[0] = 1.0;
    Embedding vb(4, 0.0);
    vb[0] = cosines[i];
    vb[1] = std::sqrt(1.0 - cosines[i] * cosines[i]);
    model.set(a, va);
    model.set(b, vb);
    pairs.push_back({a, b, gold[i]});
  }
  return pairs;
}

}  // namespace

TEST_CASE("sts correlation endpoints and frozen oracle value") {
  {
    fixtures::FakeModel model;
    const auto pairs = sts_pairs_with_cosines(model, {0.1, 0.3, 0.5, 0.7, 0.9},
                                              {0.5, 1.5, 2.5, 3.5, 4.5});
    CHECK(eval_sts(pairs, "inst", model.fn()) == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    fixtures::FakeModel model;
    const auto pairs = sts_pairs_with_cosines(model, {0.1, 0.3, 0.5, 0.7, 0.9},
                                              {4.5, 3.5, 2.5, 1.5, 0.5});
    CHECK(eval_sts(pairs, "inst", model.fn()) == doctest::Approx(-1.0).epsilon(1e-12));
  }
  {
    fixtures::FakeModel model;
    // scipy.stats.spearmanr on these predicted/gold vectors
    const std::vector<double> pred = {0.12, 0.93, 0.45, 0.71, 0.33,
                                      0.88, 0.05, 0.64, 0.27, 0.52};
    const std::vector<double> gold = {1.0, 3.1, 2.2, 4.9, 2.0, 4.1, 1.4, 0.6, 1.7, 2.6};
    const auto pairs = sts_pairs_with_cosines(model, pred, gold);
    CHECK(eval_sts(pairs, "inst", model.fn()) ==
          doctest::Approx(0.6848484848484848).epsilon(1e-12));
  }
}

TEST_CASE("spearman handles ties with average ranks and rejects constants") {
  // scipy.stats.spearmanr with tied values
  CHECK(spearman({0.3, 0.3, 0.7, 0.9, 0.1, 0.7}, {2.0, 1.0, 3.5, 5.0, 0.5, 3.5}) ==
        doctest::Approx(0.985184366143778).epsilon(1e-12));
  CHECK_THROWS_AS(spearman({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), ValidationError);
  CHECK_THROWS_AS(spearman({1.0, 2.0}, {1.0, 2.0}), ValidationError);

  fixtures::FakeModel model;
  const auto pairs =
      sts_pairs_with_cosines(model, {0.5, 0.5, 0.5, 0.5}, {1.0, 2.0, 3.0, 4.0});
  CHECK_THROWS_AS(eval_sts(pairs, "inst", model.fn()), ValidationError);
}

TEST_CASE("classification accuracy via nearest label embedding") {
  fixtures::FakeModel model;
  model.set("joyful text", basis(4, 0));
  model.set("positive", basis(4, 0));
  model.set("negative", basis(4, 1));
  // single record scored against an explicit two-label set
  CHECK(eval_classification({{"joyful text", 1, "positive"}},
                            {{0, "negative"}, {1, "positive"}}, "inst",
                            model.fn()) == doctest::Approx(1.0));

  CHECK_THROWS_WITH_AS(eval_classification({{"a", 0, "same"}, {"b", 1, "same"}}, "i", model.fn()),
                       doctest::Contains("share the text"), ValidationError);
}

TEST_CASE("classification matches an exhaustive scoring oracle on 200 records") {
  std::mt19937_64 rng(777);
  fixtures::FakeModel model;
  model.set("label yes", fixtures::random_unit_vector(rng, 16));
  model.set("label no", fixtures::random_unit_vector(rng, 16));
  std::vector<LabeledRecord> records;
  for (size_t i = 0; i < 200; ++i) {
    const std::string text = "record " + std::to_string(i);
    model.set(text, fixtures::random_unit_vector(rng, 16));
    records.push_back({text, static_cast<int64_t>(i % 2), i % 2 ? "label yes" : "label no"});
  }
  const double got = eval_classification(records, "inst", model.fn(), 3);

  // exhaustive re-scoring with an independent argmax
  const Embedding no_vec = model.vectors.at("label no");
  const Embedding yes_vec = model.vectors.at("label yes");
  size_t hits = 0;
  for (const auto& r : records) {
    const Embedding& q = model.vectors.at(r.text);
    double s_no = 0.0, s_yes = 0.0;
    for (size_t k = 0; k < q.size(); ++k) {
      s_no += q[k] * no_vec[k];
      s_yes += q[k] * yes_vec[k];
    }
    // label ids: 0 -> "label no", 1 -> "label yes"; ties keep the lower id
    const int64_t predicted = s_yes > s_no ? 1 : 0;
    hits += predicted == r.label_id ? 1 : 0;
  }
  CHECK(got == doctest::Approx(static_cast<double>(hits) / 200.0).epsilon(1e-12));
}

TEST_CASE("clustering scores orthogonal classes perfectly and collapsed ones at zero") {
  fixtures::FakeModel model;
  std::vector<LabeledRecord> records;
  for (int64_t c = 0; c < 3; ++c) {
    for (size_t i = 0; i < 5; ++i) {
      const std::string text = "cl " + std::to_string(c) + " item " + std::to_string(i);
      model.set(text, basis(8, static_cast<size_t>(c)));
      records.push_back({text, c, ""});
    }
  }
  const auto perfect = eval_clustering(records, "inst", model.fn(), 5);
  CHECK(perfect.v_measure == doctest::Approx(1.0));

  fixtures::FakeModel collapsed;
  std::vector<LabeledRecord> same;
  for (int64_t c = 0; c < 2; ++c) {
    for (size_t i = 0; i < 6; ++i) {
      const std::string text = "same " + std::to_string(c) + " " + std::to_string(i);
      collapsed.set(text, basis(8, 2));
      same.push_back({text, c, ""});
    }
  }
  const auto zero = eval_clustering(same, "inst", collapsed.fn(), 5);
  CHECK(zero.homogeneity == doctest::Approx(0.0));
  CHECK(zero.v_measure == doctest::Approx(0.0));
}

TEST_CASE("v-measure matches the entropy-formula oracle on a 60-point fixture") {
  // sklearn homogeneity_completeness_v_measure on this exact labeling
  std::vector<int64_t> gold;
  std::vector<size_t> pred;
  for (int i = 0; i < 20; ++i) { gold.push_back(0); pred.push_back(0); }
  for (int i = 0; i < 10; ++i) { gold.push_back(1); pred.push_back(0); }
  for (int i = 0; i < 10; ++i) { gold.push_back(1); pred.push_back(1); }
  for (int i = 0; i < 20; ++i) { gold.push_back(2); pred.push_back(2); }
  const auto r = v_measure(gold, pred);
  CHECK(r.homogeneity == doctest::Approx(0.7103099178571525).epsilon(1e-12));
  CHECK(r.completeness == doctest::Approx(0.7715561736794714).epsilon(1e-12));
  CHECK(r.v_measure == doctest::Approx(0.7396673768007593).epsilon(1e-12));

  // end-to-end: blobs at e0 (class 0 + half of class 1), e1, e2
  fixtures::FakeModel model;
  std::vector<LabeledRecord> records;
  size_t idx = 0;
  auto add = [&](int64_t cls, size_t axis, size_t count) {
    for (size_t i = 0; i < count; ++i) {
      const std::string text = "pt " + std::to_string(idx++);
      model.set(text, basis(8, axis));
      records.push_back({text, cls, ""});
    }
  };
  add(0, 0, 20);
  add(1, 0, 10);
  add(1, 1, 10);
  add(2, 2, 20);
  const auto got = eval_clustering(records, "inst", model.fn(), 17);
  CHECK(got.v_measure == doctest::Approx(0.7396673768007593).epsilon(1e-9));
}

TEST_CASE("kmeans validation") {
  CHECK_THROWS_AS(kmeans({{1.0, 0.0}, {0.0, 1.0}}, 3, 1), ValidationError);
  std::vector<LabeledRecord> two = {{"a", 0, ""}, {"b", 1, ""}};
  fixtures::FakeModel model;
  model.set("a", basis(4, 0));
  model.set("b", basis(4, 1));
  CHECK_NOTHROW(eval_clustering(two, "i", model.fn(), 3));
  std::vector<LabeledRecord> one_class = {{"a", 0, ""}, {"b", 0, ""}};
  CHECK_THROWS_AS(eval_clustering(one_class, "i", model.fn(), 3), ValidationError);
}

TEST_CASE("retrieval metrics are invariant to corpus order and global rotation") {
  std::mt19937_64 rng(31);
  fixtures::FakeModel model;
  std::vector<IdText> queries, corpus;
  std::map<std::string, std::map<std::string, double>> qrels;
  for (size_t i = 0; i < 30; ++i) {
    const std::string dt = "doc " + std::to_string(i);
    corpus.push_back({"d" + std::to_string(i), dt});
    model.set(dt, fixtures::random_unit_vector(rng, 8));
  }
  for (size_t i = 0; i < 10; ++i) {
    const std::string qt = "query " + std::to_string(i);
    queries.push_back({"q" + std::to_string(i), qt});
    model.set(qt, fixtures::random_unit_vector(rng, 8));
    qrels["q" + std::to_string(i)]["d" + std::to_string(3 * i)] = 1.0;
  }
  const auto base = eval_retrieval(queries, corpus, qrels, "i", model.fn());

  std::vector<IdText> shuffled = corpus;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto permuted = eval_retrieval(queries, shuffled, qrels, "i", model.fn());
  CHECK(permuted.ndcg_at_10 == doctest::Approx(base.ndcg_at_10).epsilon(1e-12));
  CHECK(permuted.recall_at_1 == doctest::Approx(base.recall_at_1).epsilon(1e-12));
  CHECK(permuted.recall_at_10 == doctest::Approx(base.recall_at_10).epsilon(1e-12));

  // orthogonal transform: Gram-Schmidt basis of a seeded random matrix
  std::vector<Embedding> rot(8, Embedding(8, 0.0));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& row : rot) {
    for (double& x : row) x = normal(rng);
  }
  for (size_t i = 0; i < 8; ++i) {
    for (size_t j = 0; j < i; ++j) {
      double d = 0.0;
      for (size_t k = 0; k < 8; ++k) d += rot[i][k] * rot[j][k];
      for (size_t k = 0; k < 8; ++k) rot[i][k] -= d * rot[j][k];
    }
    l2_normalize(rot[i]);
  }
  fixtures::FakeModel rotated;
  for (const auto& [text, vec] : model.vectors) {
    Embedding out(8, 0.0);
    for (size_t i = 0; i < 8; ++i) {
      for (size_t k = 0; k < 8; ++k) out[i] += rot[i][k] * vec[k];
    }
    rotated.set(text, out);
  }
  const auto turned = eval_retrieval(queries, corpus, qrels, "i", rotated.fn());
  CHECK(turned.ndcg_at_10 == doctest::Approx(base.ndcg_at_10).epsilon(1e-9));
  CHECK(turned.recall_at_1 == doctest::Approx(base.recall_at_1).epsilon(1e-9));
  CHECK(turned.recall_at_10 == doctest::Approx(base.recall_at_10).epsilon(1e-9));
}

TEST_CASE("task bundles load and run end to end") {
  const auto dir = fixtures::fresh_temp_dir("evalkit");
  {
    std::ofstream task(dir / "task.json");
    task << R"({"kind": "classification", "name": "toy-cls",)"
         << R"("instruction": "Classify the sentiment of the review."})";
    std::ofstream records(dir / "records.jsonl");
    records << R"({"text": "marvelous film", "label_id": 1, "label_text": "positive"})" << "\n"
            << R"({"text": "dreadful film", "label_id": 0, "label_text": "negative"})" << "\n";
  }
  const EvalBundle bundle = load_eval_bundle(dir.string());
  CHECK(bundle.kind == EvalKind::Classification);
  CHECK(bundle.name == "toy-cls");
  REQUIRE(bundle.records.size() == 2);

  EncoderConfig enc;
  enc.buckets = 256;
  enc.dim = 16;
  const EncoderParams params = init_params(enc);
  const auto reports = run_eval(
      bundle, [&](const std::string& t) { return encode(t, params, enc); }, 7);
  REQUIRE(reports.size() == 1);
  CHECK(reports[0].metric == "accuracy");
  CHECK(reports[0].value >= 0.0);
  CHECK(reports[0].value <= 1.0);
  CHECK(format_report_table(reports).find("accuracy") != std::string::npos);

  std::ofstream(dir / "task.json") << R"({"kind": "bogus", "instruction": "i"})";
  CHECK_THROWS_AS(load_eval_bundle(dir.string()), ValidationError);
  std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
