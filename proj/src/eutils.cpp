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

#ifdef BIOMINE_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif

#include "biomine/eutils.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "biomine/common.hpp"

namespace biomine {

namespace {
namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kEsearchPage = 200;
constexpr int kEfetchBatch = 50;

int month_from_name(const std::string& m) {
  static const char* names[] = {"jan", "feb", "mar", "apr", "may", "jun",
                                "jul", "aug", "sep", "oct", "nov", "dec"};
  std::string k = lower(m).substr(0, 3);
  for (int i = 0; i < 12; ++i) {
    if (k == names[i]) return i + 1;
  }
  return 0;
}

}  // namespace

std::optional<std::tuple<int, int, int>> parse_medline_date(const std::string& dp) {
  std::istringstream in(trim(dp));
  int year = 0;
  if (!(in >> year) || year < 1000) return std::nullopt;
  std::string month_str;
  int month = 1, day = 1;
  if (in >> month_str) {
    int m = month_from_name(month_str);
    if (m > 0) {
      month = m;
      int d;
      if (in >> d && d >= 1 && d <= 31) day = d;
    }
  }
  return std::tuple<int, int, int>{year, month, day};
}

std::vector<MedlineRecord> parse_medline(const std::string& body) {
  std::vector<MedlineRecord> records;
  MedlineRecord current;
  std::string active_tag;
  bool open = false;

  auto flush = [&] {
    if (open && !current.pmid.empty()) records.push_back(current);
    current = MedlineRecord{};
    open = false;
    active_tag.clear();
  };

  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) {
      flush();
      continue;
    }
    std::string content;
    if (line.size() > 6 && line.substr(4, 2) == "- " &&
        !std::isspace(static_cast<unsigned char>(line[0]))) {
      active_tag = trim(line.substr(0, 4));
      content = line.substr(6);
      open = true;
    } else if (starts_with(line, "      ")) {
      content = trim(line);
      if (active_tag.empty()) continue;
      // continuation joins with a space
      auto append = [&](std::string& field) {
        if (!field.empty()) field += " ";
        field += content;
      };
      if (active_tag == "TI") append(current.title);
      else if (active_tag == "AB") append(current.abstract_text);
      continue;
    } else {
      continue;
    }
    if (active_tag == "PMID") {
      current.pmid = trim(content);
    } else if (active_tag == "TI") {
      current.title = trim(content);
    } else if (active_tag == "AB") {
      current.abstract_text = trim(content);
    } else if (active_tag == "DP") {
      current.date = trim(content);
    }
  }
  flush();
  return records;
}

namespace {

class HttpEutils : public EutilsBackend {
 public:
  explicit HttpEutils(EutilsHttpConfig config) : config_(std::move(config)) {}

  std::string esearch(const std::string& term, int retstart, int retmax) override {
    httplib::Params params{{"db", "pubmed"},
                           {"term", term},
                           {"retmode", "json"},
                           {"retstart", std::to_string(retstart)},
                           {"retmax", std::to_string(retmax)},
                           {"datetype", "pdat"}};
    return get("/entrez/eutils/esearch.fcgi", params);
  }

  std::string efetch(const std::vector<std::string>& pmids) override {
    std::string ids;
    for (const auto& id : pmids) {
      if (!ids.empty()) ids += ",";
      ids += id;
    }
    httplib::Params params{
        {"db", "pubmed"}, {"id", ids}, {"rettype", "medline"}, {"retmode", "text"}};
    return get("/entrez/eutils/efetch.fcgi", params);
  }

 private:
  std::string get(const std::string& path, httplib::Params params) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      params.emplace("api_key", key);
    }
    throttle();
    httplib::Client client(config_.base_url);
    client.set_read_timeout(std::chrono::seconds(60));
    for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(500 * attempt));
      auto res = client.Get(path, params, httplib::Headers{});
      if (res && res->status == 200) return res->body;
      if (res && res->status < 500 && res->status != 429) {
        throw Error("eutils: status " + std::to_string(res->status) + " on " + path);
      }
    }
    throw Error("eutils: retries exhausted on " + path);
  }

  void throttle() {
    auto now = std::chrono::steady_clock::now();
    auto min_gap = std::chrono::milliseconds(config_.min_request_interval_ms);
    if (now - last_request_ < min_gap) {
      std::this_thread::sleep_for(min_gap - (now - last_request_));
    }
    last_request_ = std::chrono::steady_clock::now();
  }

  EutilsHttpConfig config_;
  std::chrono::steady_clock::time_point last_request_{};
};

class FixtureEutils : public EutilsBackend {
 public:
  explicit FixtureEutils(std::string dir) : dir_(std::move(dir)) {
    if (!fs::is_directory(dir_)) throw Error("eutils fixture: not a directory: " + dir_);
  }

  std::string esearch(const std::string&, int retstart, int) override {
    fs::path p = fs::path(dir_) / ("esearch_" + std::to_string(retstart) + ".json");
    if (!fs::exists(p)) throw Error("eutils fixture: missing " + p.string());
    return read_file(p.string());
  }

  std::string efetch(const std::vector<std::string>&) override {
    fs::path p = fs::path(dir_) / ("efetch_" + std::to_string(efetch_calls_++) + ".txt");
    if (!fs::exists(p)) throw Error("eutils fixture: missing " + p.string());
    return read_file(p.string());
  }

 private:
  std::string dir_;
  int efetch_calls_ = 0;
};

bool date_at_least(const std::tuple<int, int, int>& date, const std::tuple<int, int, int>& floor) {
  return date >= floor;
}

std::tuple<int, int, int> parse_floor(const std::string& s) {
  auto parts = split(s, '-');
  if (parts.size() == 1) parts = split(s, '/');
  if (parts.empty() || parts.size() > 3) throw Error("fetch: bad date_floor " + s);
  int y = std::stoi(parts[0]);
  int m = parts.size() > 1 ? std::stoi(parts[1]) : 1;
  int d = parts.size() > 2 ? std::stoi(parts[2]) : 1;
  return {y, m, d};
}

}  // namespace

std::unique_ptr<EutilsBackend> make_eutils_http(const EutilsHttpConfig& config) {
  return std::make_unique<HttpEutils>(config);
}

std::unique_ptr<EutilsBackend> make_eutils_fixture(const std::string& dir) {
  return std::make_unique<FixtureEutils>(dir);
}

std::vector<Document> fetch_articles(const FetchQuery& query, EutilsBackend& backend,
                                     FetchStats* stats) {
  if (query.max_results <= 0) throw Error("fetch: max_results must be positive");
  const auto floor = parse_floor(query.date_floor);

  // Page through esearch until the id list or the result budget runs out.
  std::vector<std::string> ids;
  std::set<std::string> seen_ids;
  int retstart = 0;
  long total = -1;
  FetchStats local;
  FetchStats& st = stats ? *stats : local;
  while (static_cast<int>(ids.size()) < query.max_results &&
         (total < 0 || retstart < total)) {
    json page;
    try {
      page = json::parse(backend.esearch(query.term, retstart, kEsearchPage));
    } catch (const json::exception& e) {
      throw Error(std::string("fetch: bad esearch response: ") + e.what());
    }
    st.pages++;
    const auto& result = page.at("esearchresult");
    total = std::stol(result.at("count").get<std::string>());
    const auto& idlist = result.at("idlist");
    if (idlist.empty()) break;
    for (const auto& id : idlist) {
      std::string pmid = id.get<std::string>();
      if (!seen_ids.insert(pmid).second) {
        st.duplicates++;
        continue;
      }
      ids.push_back(pmid);
    }
    retstart += static_cast<int>(idlist.size());
  }

  std::vector<Document> docs;
  std::set<std::string> emitted;
  for (size_t at = 0; at < ids.size() && static_cast<int>(docs.size()) < query.max_results;
       at += kEfetchBatch) {
    std::vector<std::string> batch(
        ids.begin() + static_cast<long>(at),
        ids.begin() + static_cast<long>(std::min(at + kEfetchBatch, ids.size())));
    for (const auto& rec : parse_medline(backend.efetch(batch))) {
      if (static_cast<int>(docs.size()) >= query.max_results) break;
      if (!emitted.insert(rec.pmid).second) {
        st.duplicates++;
        continue;
      }
      if (rec.abstract_text.empty()) {
        st.skipped_no_abstract++;
        continue;
      }
      auto date = parse_medline_date(rec.date);
      if (!date || !date_at_least(*date, floor)) {
        st.skipped_date++;
        continue;
      }
      Document d;
      d.doc_id = rec.pmid;
      d.title = rec.title;
      d.abstract_text = rec.abstract_text;
      docs.push_back(std::move(d));
    }
  }
  return docs;
}

}  // namespace biomine
