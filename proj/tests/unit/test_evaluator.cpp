#include <doctest.h>

#include <algorithm>
#include <fstream>

#include "ltqa/evaluator.hpp"
#include "../support/fixtures.hpp"

using namespace ltqa;
using ltqa::testing::grouped_instance;

namespace {

const std::set<Variant> kOrig{Variant::original};
const std::set<Variant> kOrigSem{Variant::original, Variant::semantic};
const std::set<Variant> kAll{Variant::original, Variant::semantic, Variant::context};

std::vector<Prediction> all_correct(const std::vector<QAInstance>& gold) {
  std::vector<Prediction> preds;
  for (const auto& inst : gold) preds.push_back({inst.id, inst.gold_index});
  return preds;
}

Prediction wrong(const QAInstance& inst) {
  return {inst.id, (inst.gold_index + 1) % static_cast<int>(inst.choices.size())};
}

// 12 complete sentence groups plus 4 ungrouped riddles. Planted errors:
// originals in G0 G1, semantics in G1 G2 G3, contexts in G4 G5, one ungrouped.
struct Forty {
  std::vector<QAInstance> gold;
  std::vector<Prediction> preds;
};

Forty forty_fixture() {
  Forty f;
  for (int g = 0; g < 12; ++g) {
    const auto key = "SP-" + std::to_string(g);
    f.gold.push_back(grouped_instance(key, Variant::original, Subtask::sentence, g % 4));
    f.gold.push_back(grouped_instance(key, Variant::semantic, Subtask::sentence, (g + 1) % 4));
    f.gold.push_back(grouped_instance(key, Variant::context, Subtask::sentence, (g + 2) % 4));
  }
  for (int u = 0; u < 4; ++u) {
    auto inst = grouped_instance("", Variant::ungrouped, Subtask::sentence, u);
    inst.id = "U" + std::to_string(u);
    f.gold.push_back(inst);
  }
  const std::set<std::string> planted{"SP-0", "SP-1", "SP-1_SR", "SP-2_SR", "SP-3_SR", "SP-4_CR", "SP-5_CR", "U2"};
  for (const auto& inst : f.gold) f.preds.push_back(planted.contains(inst.id) ? wrong(inst) : Prediction{inst.id, inst.gold_index});
  return f;
}

}  // namespace

TEST_CASE("instance accuracy") {
  std::vector<QAInstance> gold;
  for (int i = 0; i < 4; ++i) gold.push_back(grouped_instance("g" + std::to_string(i), Variant::original, Subtask::sentence, i));
  auto preds = all_correct(gold);
  CHECK(instance_accuracy(preds, gold) == Ratio(1, 1));
  preds[2] = wrong(gold[2]);
  CHECK(instance_accuracy(preds, gold) == Ratio(3, 4));

  SUBCASE("errors") {
    auto unknown = preds;
    unknown.push_back({"nope", 0});
    try {
      instance_accuracy(unknown, gold);
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("nope") != std::string::npos);
    }
    CHECK_THROWS_AS(instance_accuracy(preds, gold, Variant::semantic), ValidationError);
    auto dup = preds;
    dup.push_back(preds[0]);
    CHECK_THROWS_AS(instance_accuracy(dup, gold), ValidationError);
    auto out_of_range = preds;
    out_of_range[0].chosen_index = 4;
    CHECK_THROWS_AS(instance_accuracy(out_of_range, gold), ValidationError);
    out_of_range[0].chosen_index = -1;
    CHECK_THROWS_AS(instance_accuracy(out_of_range, gold), ValidationError);
  }
}

TEST_CASE("group accuracy by definition") {
  std::vector<QAInstance> gold;
  for (const char* key : {"A", "B"}) {
    for (Variant v : {Variant::original, Variant::semantic, Variant::context}) {
      gold.push_back(grouped_instance(key, v, Subtask::sentence, 1));
    }
  }
  auto preds = all_correct(gold);
  for (const auto& members : {kOrig, kOrigSem, kAll}) CHECK(group_accuracy(preds, gold, members).value == Ratio(1, 1));
  preds[5] = wrong(gold[5]);  // B context
  CHECK(group_accuracy(preds, gold, kOrigSem).value == Ratio(1, 1));
  CHECK(group_accuracy(preds, gold, kAll).value == Ratio(1, 2));
  CHECK(group_accuracy(preds, gold, kAll).warnings.empty());

  SUBCASE("a group without an original is rejected") {
    std::vector<QAInstance> orphan{gold[1], gold[2]};
    CHECK_THROWS_AS(group_accuracy(all_correct(orphan), orphan, kOrigSem), ValidationError);
  }
  SUBCASE("a missing variant is scored on what exists and warned about") {
    std::vector<QAInstance> partial{gold[0], gold[1], gold[3], gold[4], gold[5]};
    auto p = all_correct(partial);
    const auto r = group_accuracy(p, partial, kAll);
    CHECK(r.value == Ratio(1, 1));
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0] == "group 'A' has no context member");
  }
  SUBCASE("a grouped member without a prediction is rejected") {
    auto missing = all_correct(gold);
    missing.pop_back();
    CHECK_THROWS_AS(group_accuracy(missing, gold, kAll), ValidationError);
  }
}

TEST_CASE("random fixtures match brute-force oracles") {
  Rng rng(77);
  std::size_t seen_sizes[6] = {};
  for (int trial = 0; trial < 10000; ++trial) {
    const bool complete = trial % 4 == 0;
    const auto f = ltqa::testing::random_metric_fixture(rng, complete, rng.uniform());
    std::map<std::string, std::size_t> sizes;
    for (const auto& inst : f.gold) {
      if (inst.variant != Variant::ungrouped) ++sizes[inst.group.value];
    }
    for (const auto& [key, n] : sizes) ++seen_sizes[std::min<std::size_t>(n, 5)];

    CHECK(instance_accuracy(f.preds, f.gold) == ltqa::testing::brute_instance_accuracy(f.preds, f.gold, std::nullopt));
    CHECK(instance_accuracy(f.preds, f.gold, Variant::original) ==
          ltqa::testing::brute_instance_accuracy(f.preds, f.gold, Variant::original));
    const auto o = group_accuracy(f.preds, f.gold, kOrig).value;
    const auto os = group_accuracy(f.preds, f.gold, kOrigSem).value;
    const auto osc = group_accuracy(f.preds, f.gold, kAll).value;
    CHECK(o == ltqa::testing::brute_group_accuracy(f.preds, f.gold, kOrig));
    CHECK(os == ltqa::testing::brute_group_accuracy(f.preds, f.gold, kOrigSem));
    CHECK(osc == ltqa::testing::brute_group_accuracy(f.preds, f.gold, kAll));

    // Nesting and the one-original identity hold on every fixture.
    CHECK(osc <= os);
    CHECK(os <= o);
    CHECK(o == instance_accuracy(f.preds, f.gold, Variant::original));

    if (complete) {
      const auto sem = instance_accuracy(f.preds, f.gold, Variant::semantic);
      CHECK(os <= std::min(o, sem));
      const auto m = subtask_metrics(f.preds, f.gold, Subtask::sentence);
      CHECK(m.orig_sem_con <= m.orig_sem);
      CHECK(*m.orig_sem <= std::min(*m.original, *m.semantic));
      CHECK(m.warnings.empty());
    }
  }
  for (std::size_t n = 1; n <= 5; ++n) CHECK(seen_sizes[n] > 0);
}

TEST_CASE("metrics ignore input order") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    auto f = ltqa::testing::random_metric_fixture(rng, trial % 2 == 0);
    const auto before = to_json(subtask_metrics(f.preds, f.gold, Subtask::sentence));
    rng.shuffle(std::span<QAInstance>(f.gold));
    rng.shuffle(std::span<Prediction>(f.preds));
    auto after = to_json(subtask_metrics(f.preds, f.gold, Subtask::sentence));
    // Warning order follows first appearance; compare as sets.
    auto sorted = [](nlohmann::json w) {
      std::sort(w.begin(), w.end());
      return w;
    };
    CHECK(before.at("cells") == after.at("cells"));
    CHECK(sorted(before.at("warnings")) == sorted(after.at("warnings")));
  }
}

TEST_CASE("hand-counted 40 instance table") {
  const auto f = forty_fixture();
  REQUIRE(f.gold.size() == 40);
  const auto m = subtask_metrics(f.preds, f.gold, Subtask::sentence);
  CHECK(*m.original == Ratio(10, 12));
  CHECK(*m.semantic == Ratio(9, 12));
  CHECK(*m.context == Ratio(10, 12));
  CHECK(*m.orig_sem == Ratio(8, 12));
  CHECK(*m.orig_sem_con == Ratio(6, 12));
  CHECK(m.overall == Ratio(32, 40));
  CHECK(m.original->num == 10);
  CHECK(m.original->den == 12);

  const auto table = build_results_table({{Subtask::sentence, f.preds}}, {{Subtask::sentence, f.gold}});
  const auto text = render_results_table(table, {"system", false, false});
  CHECK(text.find("0.833           0.750           0.833           0.667           0.500           0.800") !=
        std::string::npos);
  const auto pct = render_results_table(table, {"system", false, true});
  CHECK(pct.find("83.3") != std::string::npos);
  CHECK(pct.find("(accuracy, %)") != std::string::npos);

  SUBCASE("partial coverage lists missing ids") {
    auto partial = f.preds;
    partial.erase(partial.begin() + 4);
    try {
      build_results_table({{Subtask::sentence, partial}}, {{Subtask::sentence, f.gold}});
      FAIL("expected error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find(f.gold[4].id) != std::string::npos);
    }
  }
  SUBCASE("json round trip keeps exact cells") {
    const auto doc = to_json(m);
    CHECK(doc.at("cells").at("orig_sem") == nlohmann::json{{"num", 8}, {"den", 12}});
    const auto back = subtask_metrics_from_json(doc);
    CHECK(to_json(back) == doc);
    CHECK(back.orig_sem_con == m.orig_sem_con);
  }
}

TEST_CASE("results table layout") {
  std::vector<QAInstance> sentence, word;
  for (int g = 0; g < 3; ++g) {
    for (Variant v : {Variant::original, Variant::semantic, Variant::context}) {
      sentence.push_back(grouped_instance("S" + std::to_string(g), v, Subtask::sentence, 2));
      word.push_back(grouped_instance("W" + std::to_string(g), v, Subtask::word, 0));
    }
  }
  const auto table = build_results_table({{Subtask::sentence, all_correct(sentence)}, {Subtask::word, all_correct(word)}},
                                         {{Subtask::sentence, sentence}, {Subtask::word, word}});
  REQUIRE(table.rows.size() == 2);
  const auto text = render_results_table(table, {"ours", false, false});
  for (const char* column : kResultColumns) CHECK(text.find(column) != std::string::npos);
  CHECK(text.find("Sentence Puzzle") != std::string::npos);
  CHECK(text.find("Word Puzzle") != std::string::npos);
  std::size_t ones = 0;
  for (auto at = text.find("1.000"); at != std::string::npos; at = text.find("1.000", at + 1)) ++ones;
  CHECK(ones == 12);

  SUBCASE("reference rows are flagged and verbatim") {
    const auto with_refs = render_results_table(table);
    for (const auto& ref : reference_rows()) CHECK(with_refs.find(std::string(ref.label) + " *") != std::string::npos);
    CHECK(with_refs.find(".907") != std::string::npos);
    CHECK(with_refs.find("not reproduced") != std::string::npos);
    CHECK(text.find("Human") == std::string::npos);
  }
  SUBCASE("missing variants leave cells empty") {
    std::vector<QAInstance> originals;
    for (const auto& inst : sentence) {
      if (inst.variant == Variant::original) originals.push_back(inst);
    }
    const auto m = subtask_metrics(all_correct(originals), originals, Subtask::sentence);
    CHECK_FALSE(m.semantic.has_value());
    CHECK_FALSE(m.context.has_value());
    CHECK(m.orig_sem == Ratio(1, 1));
    CHECK(m.warnings.size() == 6);
  }
}

TEST_CASE("ablation deltas") {
  const std::vector<std::pair<std::string, Ratio>> rows{{"BERT + AMSC", parse_ratio("50.8")},
                                                        {"BERT + AMMC", parse_ratio("60.0")},
                                                        {"DeBERTaV3 + AMMC", parse_ratio("88.3")},
                                                        {"+ Humor + RS", parse_ratio("92.5")}};
  const auto out = ablation_deltas(rows);
  REQUIRE(out.size() == 4);
  CHECK_FALSE(out[0].delta.has_value());
  CHECK(*out[1].delta == parse_ratio("9.2"));
  CHECK(*out[2].delta == parse_ratio("28.3"));
  CHECK(*out[3].delta == parse_ratio("4.2"));
  const auto text = render_ablation(out);
  CHECK(text.find("+9.2") != std::string::npos);
  CHECK(text.find("+28.3") != std::string::npos);
  CHECK(text.find("+4.2") != std::string::npos);
  CHECK(text.find("---") != std::string::npos);

  const std::vector<std::pair<std::string, Ratio>> single{{"only", Ratio(1, 2)}};
  const auto one = ablation_deltas(single);
  REQUIRE(one.size() == 1);
  CHECK_FALSE(one[0].delta.has_value());

  const std::vector<std::pair<std::string, Ratio>> flat{{"a", Ratio(3, 5)}, {"b", Ratio(6, 10)}, {"c", Ratio(3, 5)}};
  for (std::size_t i = 1; i < 3; ++i) CHECK(*ablation_deltas(flat)[i].delta == Ratio(0, 1));
  CHECK(render_ablation(ablation_deltas(flat)).find("+0.0") != std::string::npos);
}

TEST_CASE("prediction files") {
  ltqa::testing::TempDir dir("preds");
  const std::vector<Prediction> preds{{"a", 0}, {"b", 3}};
  {
    std::ofstream out(dir / "p.jsonl");
    out << predictions_to_jsonl(preds) << "\n";
  }
  CHECK(read_predictions(dir / "p.jsonl") == preds);
  {
    std::ofstream out(dir / "bad.jsonl");
    out << "{\"id\": \"a\"}\n";
  }
  CHECK_THROWS_AS(read_predictions(dir / "bad.jsonl"), FormatError);
  CHECK_THROWS_AS(read_predictions(dir / "absent.jsonl"), IoError);
}
