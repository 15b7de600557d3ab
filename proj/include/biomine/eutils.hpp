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

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "biomine/corpus.hpp"

namespace biomine {

struct FetchQuery {
  std::string term;
  std::string date_floor = "2024-04-01";  // YYYY-MM-DD, publication date
  int max_results = 100;
};

// Raw transport for the esearch/efetch endpoints: live HTTP with request
// throttling, or recorded response files for tests.
class EutilsBackend {
 public:
  virtual ~EutilsBackend() = default;
  // JSON body of an esearch page
  virtual std::string esearch(const std::string& term, int retstart, int retmax) = 0;
  // MEDLINE-format body for a batch of ids
  virtual std::string efetch(const std::vector<std::string>& pmids) = 0;
};

struct EutilsHttpConfig {
  std::string base_url = "https://eutils.ncbi.nlm.nih.gov";
  std::string api_key_env = "NCBI_API_KEY";
  // no key: at most 3 requests/second per the service's usage policy
  int min_request_interval_ms = 340;
  int max_retries = 3;
};

std::unique_ptr<EutilsBackend> make_eutils_http(const EutilsHttpConfig& config);

// Reads esearch_<retstart>.json and efetch_<n>.txt from a directory, in call
// order.
std::unique_ptr<EutilsBackend> make_eutils_fixture(const std::string& dir);

struct FetchStats {
  int pages = 0;
  int skipped_no_abstract = 0;
  int skipped_date = 0;
  int duplicates = 0;
};

// esearch -> id pages -> efetch -> title+abstract documents, deduplicated by
// PMID, filtered to publication date >= date_floor.
std::vector<Document> fetch_articles(const FetchQuery& query, EutilsBackend& backend,
                                     FetchStats* stats = nullptr);

// (year, month, day) with missing parts defaulting to 1; handles the MEDLINE
// DP forms "2024 Jun 15", "2024 Jun", "2024".
std::optional<std::tuple<int, int, int>> parse_medline_date(const std::string& dp);

struct MedlineRecord {
  std::string pmid;
  std::string title;
  std::string abstract_text;
  std::string date;  // raw DP field
};

std::vector<MedlineRecord> parse_medline(const std::string& body);

}  // namespace biomine
