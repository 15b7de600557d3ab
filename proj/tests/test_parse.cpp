// Copyright 2025-present the biomine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <random>

#include "biomine/parse.hpp"
#include "support/helpers.hpp"

using namespace biomine;

namespace {

Document make_doc(const std::string& id, const std::string& title, const std::string& abs = "") {
  Document d;
  d.doc_id = id;
  d.title = title;
  d.abstract_text = abs;
  return d;
}

Mention span(const Document& d, size_t start, size_t end, const std::string& type) {
  Mention m;
  m.entity_type = type;
  m.start = start;
  m.end = end;
  m.surface = d.full_text().substr(start, end - start);
  return m;
}

const std::set<std::string> kDiseaseOnly{"Disease"};
const std::set<std::string> kBothTypes{"Disease", "Chemical"};

// Random document + non-overlapping mentions over word boundaries, with
// occasional markup characters baked into the text.
struct RandomNerFixture {
  Document doc;
  std::vector<Mention> mentions;
};

RandomNerFixture random_ner_fixture(std::mt19937_64& rng) {
  static const char* words[] = {"alpha",  "beta<x", "gamma", "delta&", "epsilon", ">zeta",
                                "etaeta", "theta",  "iota",  "kappa",  "lam=bda", "muon"};
  RandomNerFixture f;
  std::string text;
  std::vector<std::pair<size_t, size_t>> bounds;
  const size_t n_words = 3 + rng() % 12;
  for (size_t i = 0; i < n_words; ++i) {
    if (i) text += (rng() % 8 == 0) ? "  " : " ";
    size_t start = text.size();
    text += words[rng() % 12];
    bounds.push_back({start, text.size()});
  }
  f.doc = make_doc("r", text);
  for (const auto& [start, end] : bounds) {
    if (rng() % 3 == 0 && f.mentions.size() < 5) {
      f.mentions.push_back(span(f.doc, start, end, (rng() % 2) ? "Disease" : "Chemical"));
    }
  }
  return f;
}

}  // namespace

TEST_SUITE("parse") {
  TEST_CASE("render matches the tag scheme on the two-mention example") {
    Document doc = make_doc("pd", "Parkinson's disease (PD) is treated.");
    std::vector<Mention> mentions{span(doc, 0, 19, "Disease"), span(doc, 21, 23, "Disease")};
    std::string tagged = render_ner(doc, mentions);
    CHECK(tagged ==
          "<Type = \"Disease\">Parkinson's disease</Type> (<Type = \"Disease\">PD</Type>) is "
          "treated.");
    CHECK(detag(tagged) == doc.full_text());

    auto parsed = parse_ner(doc, tagged, kDiseaseOnly);
    CHECK(parsed.alignment_quality == AlignmentQuality::kExact);
    REQUIRE(parsed.mentions.size() == 2);
    CHECK(parsed.mentions[0] == mentions[0]);
    CHECK(parsed.mentions[1] == mentions[1]);
  }

  TEST_CASE("merged-mention model output parses faithfully to one span") {
    Document doc = make_doc("pd", "Parkinson's disease (PD) is treated.");
    std::string merged = "<Type = \"Disease\">Parkinson's disease (PD)</Type> is treated.";
    auto parsed = parse_ner(doc, merged, kDiseaseOnly);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0].surface == "Parkinson's disease (PD)");
    CHECK(parsed.mentions[0].start == 0);
    CHECK(parsed.mentions[0].end == 24);
  }

  TEST_CASE("zero mentions renders to the bare text and parses back empty") {
    Document doc = make_doc("x", "No entities here.");
    CHECK(render_ner(doc, {}) == doc.full_text());
    auto parsed = parse_ner(doc, doc.full_text(), kDiseaseOnly);
    CHECK(parsed.mentions.empty());
    CHECK(parsed.alignment_quality == AlignmentQuality::kExact);
    CHECK(parsed.warnings.empty());
  }

  TEST_CASE("markup characters in text survive the round trip") {
    Document doc = make_doc("esc", "Values p<0.05 & q>2 matter for beta<x levels.");
    std::vector<Mention> mentions{span(doc, 31, 37, "Chemical")};
    REQUIRE(mentions[0].surface == "beta<x");
    std::string tagged = render_ner(doc, mentions);
    CHECK(detag(tagged) == doc.full_text());
    auto parsed = parse_ner(doc, tagged, kBothTypes);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0] == mentions[0]);
  }

  TEST_CASE("overlapping mentions: the longer one wins at render time") {
    Document doc = make_doc("ov", "severe renal failure onset");
    std::vector<Mention> mentions{span(doc, 7, 20, "Disease"), span(doc, 13, 20, "Disease")};
    std::vector<std::string> warnings;
    std::string tagged = render_ner(doc, mentions, &warnings);
    CHECK(warnings.size() == 1);
    auto parsed = parse_ner(doc, tagged, kDiseaseOnly);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0].surface == "renal failure");
  }

  TEST_CASE("render/parse round-trip property on randomized fixtures") {
    std::mt19937_64 rng(424242);
    for (int iter = 0; iter < 1000; ++iter) {
      auto f = random_ner_fixture(rng);
      std::string tagged = render_ner(f.doc, f.mentions);
      CHECK(detag(tagged) == f.doc.full_text());
      auto parsed = parse_ner(f.doc, tagged, kBothTypes);
      REQUIRE(parsed.mentions.size() == f.mentions.size());
      for (size_t i = 0; i < f.mentions.size(); ++i) {
        CHECK(parsed.mentions[i] == f.mentions[i]);
      }
    }
  }

  TEST_CASE("whitespace reflow still yields exact offsets") {
    Document doc = make_doc("ws", "Alpha beta", "gamma delta end");
    std::vector<Mention> mentions{span(doc, 11, 16, "Disease")};
    REQUIRE(mentions[0].surface == "gamma");
    // model reflowed whitespace: double spaces and a newline
    std::string tagged = "Alpha  beta\n<Type = \"Disease\">gamma</Type> delta  end";
    auto parsed = parse_ner(doc, tagged, kDiseaseOnly);
    CHECK(parsed.alignment_quality == AlignmentQuality::kExact);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0] == mentions[0]);
  }

  TEST_CASE("rewritten text falls back to degraded occurrence matching") {
    Document doc = make_doc("dg", "The dose of lidocaine was raised, then lidocaine was stopped.");
    // model dropped half the sentence but tagged both occurrences
    std::string tagged =
        "dose of <Type = \"Chemical\">lidocaine</Type> raised, "
        "<Type = \"Chemical\">lidocaine</Type> stopped";
    auto parsed = parse_ner(doc, tagged, kBothTypes);
    CHECK(parsed.alignment_quality == AlignmentQuality::kDegraded);
    CHECK(!parsed.warnings.empty());
    REQUIRE(parsed.mentions.size() == 2);
    // left-to-right occurrence assignment: distinct offsets
    CHECK(parsed.mentions[0].start == 12);
    CHECK(parsed.mentions[1].start == 39);
  }

  TEST_CASE("unknown types are dropped with a warning") {
    Document doc = make_doc("ut", "aspirin helps");
    std::string tagged = "<Type = \"Gene\">aspirin</Type> helps";
    auto parsed = parse_ner(doc, tagged, kBothTypes);
    CHECK(parsed.mentions.empty());
    REQUIRE(!parsed.warnings.empty());
    CHECK(parsed.warnings[0].find("Gene") != std::string::npos);
  }

  TEST_CASE("unclosed and malformed tags are repaired") {
    Document doc = make_doc("rep", "aspirin and ibuprofen");
    auto parsed = parse_ner(doc, "<Type = \"Chemical\">aspirin and ibuprofen", kBothTypes);
    CHECK(parsed.alignment_quality == AlignmentQuality::kRepaired);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0].surface == "aspirin and ibuprofen");

    // bare tag form
    parsed = parse_ner(doc, "<Chemical>aspirin</Chemical> and ibuprofen", kBothTypes);
    REQUIRE(parsed.mentions.size() == 1);
    CHECK(parsed.mentions[0].surface == "aspirin");
    CHECK(parsed.alignment_quality == AlignmentQuality::kRepaired);
  }

  TEST_CASE("total garbage parses to empty with warnings, never throws") {
    Document doc = make_doc("g", "something sensible");
    auto parsed = parse_ner(doc, "%%%%@@@@ no overlap at all 12345", kBothTypes);
    CHECK(parsed.mentions.empty());
    CHECK(!parsed.warnings.empty());
  }

  TEST_CASE("fuzzed mutations of valid outputs never raise") {
    std::mt19937_64 rng(777);
    static const char junk[] = "<>\"=/&;{}()[]";
    for (int iter = 0; iter < 500; ++iter) {
      auto f = random_ner_fixture(rng);
      std::string tagged = render_ner(f.doc, f.mentions);
      const int mutations = 1 + static_cast<int>(rng() % 6);
      for (int m = 0; m < mutations; ++m) {
        if (tagged.empty()) break;
        size_t pos = rng() % tagged.size();
        switch (rng() % 3) {
          case 0: tagged.erase(pos, 1 + rng() % 3); break;
          case 1: tagged.insert(pos, 1, junk[rng() % (sizeof(junk) - 1)]); break;
          default: tagged[pos] = junk[rng() % (sizeof(junk) - 1)];
        }
      }
      CHECK_NOTHROW(parse_ner(f.doc, tagged, kBothTypes));
      CHECK_NOTHROW(parse_re(tagged, std::nullopt, EntityCatalog{}));
      CHECK_NOTHROW(parse_labels(tagged, {"A", "B"}));
    }
  }

  TEST_CASE("re tuples parse and ground against the known mention set") {
    EntityCatalog catalog;
    catalog.add("tacrolimus", "D016559");
    catalog.add("scleroderma renal crisis", "D007674");
    auto parsed = parse_re("(tacrolimus, scleroderma renal crisis)", std::nullopt, catalog);
    REQUIRE(parsed.relations.size() == 1);
    CHECK(parsed.relations[0].subject_id == "D016559");
    CHECK(parsed.relations[0].object_id == "D007674");
    CHECK(!parsed.relations[0].relation_type.has_value());
  }

  TEST_CASE("re triples validate the type against the vocabulary") {
    EntityCatalog catalog;
    catalog.add("mexiletine", "D008801");
    catalog.add("ventricular tachycardia", "D017180");
    std::vector<std::string> vocab{"Positive_Correlation", "Negative_Correlation", "Association"};

    auto parsed =
        parse_re("(mexiletine, ventricular tachycardia, Negative_Correlation)", vocab, catalog);
    REQUIRE(parsed.relations.size() == 1);
    CHECK(parsed.relations[0].relation_type == "Negative_Correlation");

    // case and separator drift still canonicalizes
    parsed = parse_re("( Mexiletine , Ventricular Tachycardia , negative correlation )", vocab,
                      catalog);
    REQUIRE(parsed.relations.size() == 1);
    CHECK(parsed.relations[0].relation_type == "Negative_Correlation");

    // unknown type is dropped with a warning
    parsed = parse_re("(mexiletine, ventricular tachycardia, Cures)", vocab, catalog);
    CHECK(parsed.relations.empty());
    CHECK(!parsed.warnings.empty());
  }

  TEST_CASE("re parsing: empty responses, duplicates, prose, unknown names") {
    EntityCatalog catalog;
    catalog.add("aspirin", "C1");
    catalog.add("headache", "C2");

    CHECK(parse_re("", std::nullopt, catalog).relations.empty());

    auto parsed = parse_re("(aspirin, headache)\n(aspirin, headache)", std::nullopt, catalog);
    CHECK(parsed.relations.size() == 1);

    parsed = parse_re("Based on the text, the pairs are: (aspirin, headache). No others.",
                      std::nullopt, catalog);
    CHECK(parsed.relations.size() == 1);

    parsed = parse_re("(aspirin, unknown thing)", std::nullopt, catalog);
    REQUIRE(parsed.relations.size() == 1);
    CHECK(parsed.relations[0].object_id == "unknown thing");
    CHECK(!parsed.warnings.empty());

    // self pair dropped
    parsed = parse_re("(aspirin, aspirin)", std::nullopt, catalog);
    CHECK(parsed.relations.empty());

    // nested parens inside a surface survive
    catalog.add("systemic sclerosis (SSc)", "C3");
    parsed = parse_re("(aspirin, systemic sclerosis (SSc))", std::nullopt, catalog);
    REQUIRE(parsed.relations.size() == 1);
    CHECK(parsed.relations[0].object_id == "C3");
  }

  TEST_CASE("re validation verbs") {
    EntityCatalog catalog;
    catalog.add("a", "A");
    catalog.add("b", "B");
    catalog.add("c", "C");
    std::vector<std::string> warnings;
    auto verdicts = parse_re_validation(
        "KEEP (a, b, Association)\nDROP (a, c, Association)\nRETYPE (b, c, Negative_Correlation)",
        std::vector<std::string>{"Association", "Negative_Correlation"}, catalog, &warnings);
    REQUIRE(verdicts.size() == 3);
    CHECK(verdicts[0].verb == ValidationVerb::kKeep);
    CHECK(verdicts[1].verb == ValidationVerb::kDrop);
    CHECK(verdicts[2].verb == ValidationVerb::kRetype);
    CHECK(verdicts[2].record.relation_type == "Negative_Correlation");

    // verbless lines default to KEEP with a warning
    warnings.clear();
    verdicts = parse_re_validation("(a, b, Association)", std::vector<std::string>{"Association"},
                                   catalog, &warnings);
    REQUIRE(verdicts.size() == 1);
    CHECK(verdicts[0].verb == ValidationVerb::kKeep);
    CHECK(!warnings.empty());
  }

  TEST_CASE("label parsing selects truthy vocabulary keys") {
    std::vector<std::string> vocab{"Treatment", "Diagnosis", "Prevention", "Mechanism",
                                   "Transmission", "Epidemic Forecasting", "Case Report"};
    auto parsed = parse_labels(
        R"({"Treatment": true, "Diagnosis": false, "Prevention": false, "Mechanism": false,
            "Transmission": false, "Epidemic Forecasting": false, "Case Report": false})",
        vocab);
    CHECK(parsed.labels == LabelSet{"Treatment"});
    CHECK(parsed.warnings.empty());
  }

  TEST_CASE("reasoning prose before the final JSON is ignored") {
    std::vector<std::string> vocab{"A", "B"};
    std::string text =
        "Let me think. The text describes {treatment of} patients... maybe {\"A\": false}. "
        "Final answer:\n{\"intermediate_steps\": \"considered A and B\", \"A\": true, \"B\": false}";
    auto parsed = parse_labels(text, vocab);
    CHECK(parsed.labels == LabelSet{"A"});
  }

  TEST_CASE("empty object yields per-key warnings") {
    auto parsed = parse_labels("{}", {"A", "B"});
    CHECK(parsed.labels.empty());
    CHECK(parsed.warnings.size() == 2);
  }

  TEST_CASE("no JSON at all yields empty labels plus a warning") {
    auto parsed = parse_labels("I cannot answer that.", {"A"});
    CHECK(parsed.labels.empty());
    REQUIRE(!parsed.warnings.empty());
  }

  TEST_CASE("label keys match case-insensitively and restore vocabulary casing") {
    auto parsed = parse_labels(R"({"treatment": "yes", "DIAGNOSIS": 0})", {"Treatment", "Diagnosis"});
    CHECK(parsed.labels == LabelSet{"Treatment"});
  }

  TEST_CASE("rendered labels parse back to the same set") {
    std::vector<std::string> vocab{"A", "B", "C"};
    LabelSet labels{"B", "C"};
    auto parsed = parse_labels(render_labels(labels, vocab), vocab);
    CHECK(parsed.labels == labels);
    CHECK(parsed.warnings.empty());
  }
}
