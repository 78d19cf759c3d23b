#pragma once

// Synthetic annotation file plus table-driven mock responses for running the
// CLI end to end.

#include <filesystem>
#include <string>
#include <vector>

#include "alignkit/dataset.hpp"
#include "alignkit/jsonl.hpp"
#include "alignkit/random.hpp"
#include "alignkit/score_codec.hpp"
#include "test_support.hpp"

namespace alignkit::testing {

struct EndToEndFixture {
  std::filesystem::path dataset;
  std::filesystem::path total_table;
  std::filesystem::path element_table;
  std::filesystem::path config;
};

inline Json LogitRow(Rng& rng, std::string_view alphabet) {
  Json logits = Json::object();
  for (char c : alphabet) logits[std::string(1, c)] = rng.Uniform(-6.0, 2.0);
  return logits;
}

// n samples per split (train, validation, test), three elements each.
inline EndToEndFixture WriteEndToEndFixture(const std::filesystem::path& dir, std::size_t n,
                                            std::uint64_t seed) {
  dataset::DatasetSplit split;
  split.train = Samples(n, 3, dataset::Split::kTrain, seed);
  split.validation = Samples(n, 3, dataset::Split::kValidation, seed + 1);
  split.test = Samples(n, 3, dataset::Split::kTest, seed + 2);

  EndToEndFixture fx{dir / "dataset.jsonl", dir / "mock_total.jsonl", dir / "mock_element.jsonl",
                     dir / "run.conf"};
  dataset::ExportDataset(split, fx.dataset);

  Rng rng(seed);
  std::vector<Json> totals, elements;
  for (const auto* list : {&split.train, &split.validation, &split.test}) {
    for (const auto& s : *list) {
      totals.push_back(Json{{"sample_id", s.sample_id}, {"task", "total"},
                            {"logits", LogitRow(rng, codec::kRatingAlphabet)}});
      for (const auto& e : s.elements) {
        elements.push_back(Json{{"sample_id", s.sample_id}, {"task", "element"}, {"element_name", e.name},
                                {"logits", LogitRow(rng, codec::kElementAlphabet)}});
      }
    }
  }
  WriteJsonLines(fx.total_table, totals);
  WriteJsonLines(fx.element_table, elements);
  WriteTextFile(fx.config, "# end-to-end fixture\n"
                           "dataset = " + fx.dataset.string() + "\n"
                           "backend = mock\n"
                           "mock_table = " + fx.total_table.string() + "\n"
                           "element_mock_table = " + fx.element_table.string() + "\n"
                           "concurrency = 4\n"
                           "seed = 7\n");
  return fx;
}

}  // namespace alignkit::testing
