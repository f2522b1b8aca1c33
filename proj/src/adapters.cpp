// SPDX-License-Identifier: Apache-2.0
#include "lmtc/adapters.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "lmtc/error.hpp"

namespace lmtc {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_text(std::string& out, const json& v) {
  if (v.is_string()) {
    if (!out.empty()) out.push_back('\n');
    out += v.get<std::string>();
  } else if (v.is_array()) {
    for (const auto& e : v) append_text(out, e);
  }
}

std::vector<std::string> string_list(const json& v) {
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (e.is_string()) out.push_back(e.get<std::string>());
    else if (e.is_number_integer()) out.push_back(std::to_string(e.get<long long>()));
    else throw Error("label entries must be strings or integers");
  }
  return out;
}

void finish(Corpus& c) {
  std::unordered_set<std::string> seen;
  for (auto& d : c.documents) {
    if (!seen.insert(d.id).second) throw Error("duplicate document id " + d.id);
    std::sort(d.gold_labels.begin(), d.gold_labels.end());
    d.gold_labels.erase(std::unique(d.gold_labels.begin(), d.gold_labels.end()),
                        d.gold_labels.end());
  }
  const Corpus* one[] = {&c};
  c.label_universe = union_label_universe(one);
}

Corpus ingest_eurlex(const std::filesystem::path& dir, Split split) {
  if (!std::filesystem::is_directory(dir))
    throw Error("eurlex adapter expects a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Corpus c;
  c.split = split;
  for (const auto& f : files) {
    json j;
    try {
      j = json::parse(read_file(f));
    } catch (const json::exception& e) {
      throw Error(f.string() + ": " + e.what());
    }
    Document d;
    d.id = j.value("celex_id", f.stem().string());
    std::string text;
    for (const char* field : {"title", "header", "recitals", "main_body", "attachments"})
      if (j.contains(field)) append_text(text, j[field]);
    d.tokens = tokenize(text);
    if (!j.contains("concepts")) throw Error(f.string() + ": missing 'concepts'");
    d.gold_labels = string_list(j["concepts"]);
    c.documents.push_back(std::move(d));
  }
  finish(c);
  return c;
}

std::size_t column(const std::vector<std::string>& header,
                   std::initializer_list<const char*> names) {
  for (const char* n : names) {
    auto it = std::find(header.begin(), header.end(), n);
    if (it != header.end()) return static_cast<std::size_t>(it - header.begin());
  }
  throw Error(std::string("CSV header lacks column ") + *names.begin());
}

Corpus ingest_mimic(const std::filesystem::path& file, Split split) {
  const auto rows = parse_csv(read_file(file));
  if (rows.empty()) throw Error(file.string() + ": empty CSV");
  const auto& header = rows.front();
  const std::size_t id_col = column(header, {"HADM_ID", "id"});
  const std::size_t text_col = column(header, {"TEXT", "text"});
  const std::size_t label_col = column(header, {"LABELS", "labels"});
  Corpus c;
  c.split = split;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size())
      throw Error(file.string() + ": row " + std::to_string(r + 1) + " has " +
                  std::to_string(row.size()) + " fields, header has " +
                  std::to_string(header.size()));
    Document d;
    d.id = row[id_col];
    d.tokens = tokenize(row[text_col]);
    std::stringstream ss(row[label_col]);
    std::string code;
    while (std::getline(ss, code, ';')) {
      code.erase(0, code.find_first_not_of(" \t"));
      code.erase(code.find_last_not_of(" \t") + 1);
      if (!code.empty()) d.gold_labels.push_back(code);
    }
    c.documents.push_back(std::move(d));
  }
  finish(c);
  return c;
}

Corpus ingest_amazon(const std::filesystem::path& file, Split split) {
  std::ifstream in(file);
  if (!in) throw Error("cannot read " + file.string());
  Corpus c;
  c.split = split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Document d;
      d.id = j.at("uid").is_string() ? j.at("uid").get<std::string>()
                                     : std::to_string(j.at("uid").get<long long>());
      std::string text;
      if (j.contains("title")) append_text(text, j["title"]);
      if (j.contains("content")) append_text(text, j["content"]);
      d.tokens = tokenize(text);
      if (j.contains("target")) d.gold_labels = string_list(j["target"]);
      else d.gold_labels = string_list(j.at("target_ind"));
      c.documents.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw Error(file.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  finish(c);
  return c;
}

}  // namespace

const std::vector<std::string>& supported_adapters() {
  static const std::vector<std::string> names{"amazon", "eurlex", "mimic"};
  return names;
}

Corpus ingest_source(std::string_view format, const std::filesystem::path& input,
                     Split split) {
  if (format == "eurlex") return ingest_eurlex(input, split);
  if (format == "mimic") return ingest_mimic(input, split);
  if (format == "amazon") return ingest_amazon(input, split);
  std::string list;
  for (const auto& n : supported_adapters()) list += (list.empty() ? "" : ", ") + n;
  throw Error("unknown source format '" + std::string(format) +
              "'; supported adapters: " + list);
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw Error("CSV: unterminated quoted field");
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace lmtc
