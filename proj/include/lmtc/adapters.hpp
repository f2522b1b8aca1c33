// SPDX-License-Identifier: Apache-2.0
#pragma once

// Converters from the source dumps of the supported benchmark families into
// the canonical corpus form.
//
//   eurlex  directory of per-document JSON files (EURLEX57K layout):
//           {"celex_id", "title", "header", "recitals", "main_body": [..],
//            "attachments", "concepts": [..]}. Files are read in name order.
//   mimic   CSV with a header row; columns HADM_ID (or id), TEXT (or text),
//           LABELS (or labels) where LABELS holds ';'-separated codes.
//           Quoted fields may span lines.
//   amazon  JSON lines {"uid", "title", "content", "target": [str]} or
//           "target_ind": [int] in place of "target".

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "lmtc/corpus.hpp"

namespace lmtc {

const std::vector<std::string>& supported_adapters();

// Throws with the list of supported adapters for an unknown format.
Corpus ingest_source(std::string_view format, const std::filesystem::path& input,
                     Split split);

// RFC 4180 reader: returns rows of fields.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace lmtc
