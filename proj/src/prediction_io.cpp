/*
 * Copyright 2026 The suq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "suq/methods.hpp"

namespace suq {
namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string at_line(std::size_t line) { return "predictions CSV line " + std::to_string(line) + ": "; }

}  // namespace

void write_predictions_csv(const PredictionSet& set, std::ostream& out) {
  out << "sample_id,slide_id,center_id,label,draw";
  for (std::size_t c = 0; c < set.classes(); ++c) out << ",p" << c;
  out << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    const SampleInfo& s = set.sample(i);
    for (std::size_t d = 0; d < set.draws(); ++d) {
      out << s.sample_id << ',' << s.slide_id << ',' << s.center_id << ',' << s.label << ',' << d;
      for (double p : set.row(i, d)) out << ',' << format_double(p);
      out << '\n';
    }
  }
}

std::string predictions_csv(const PredictionSet& set) {
  std::ostringstream ss;
  write_predictions_csv(set, ss);
  return ss.str();
}

PredictionSet read_predictions_csv(std::istream& in, std::string method) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError("predictions CSV: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_commas(line);
  static const char* kFixed[] = {"sample_id", "slide_id", "center_id", "label", "draw"};
  if (header.size() < 6) throw ParseError(at_line(1) + "expected at least one probability column");
  for (std::size_t i = 0; i < 5; ++i)
    if (header[i] != kFixed[i])
      throw ParseError(at_line(1) + "expected column '" + kFixed[i] + "', found '" + std::string(header[i]) + "'");
  const std::size_t classes = header.size() - 5;
  for (std::size_t c = 0; c < classes; ++c)
    if (header[5 + c] != "p" + std::to_string(c))
      throw ParseError(at_line(1) + "expected column 'p" + std::to_string(c) + "'");

  std::vector<SampleInfo> samples;
  std::vector<double> values;
  std::size_t draws = 0;      // fixed once the first sample is complete
  std::size_t next_draw = 0;  // expected draw index of the current sample
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw ParseError(at_line(line_no) + "expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    SampleInfo info;
    long long draw = 0;
    try {
      info.sample_id = parse_int(cells[0]);
      info.slide_id = parse_int(cells[1]);
      info.center_id = static_cast<int>(parse_int(cells[2]));
      info.label = static_cast<int>(parse_int(cells[3]));
      draw = parse_int(cells[4]);
    } catch (const ParseError& e) {
      throw ParseError(at_line(line_no) + e.what());
    }
    if (draw == 0) {
      if (!samples.empty()) {
        if (draws == 0) draws = next_draw;
        else if (next_draw != draws)
          throw ParseError(at_line(line_no) + "previous sample has " + std::to_string(next_draw) +
                           " draws, expected " + std::to_string(draws));
      }
      samples.push_back(info);
      next_draw = 0;
    } else {
      if (samples.empty() || draw != static_cast<long long>(next_draw) || !(samples.back() == info))
        throw ParseError(at_line(line_no) + "draws of a sample must be contiguous and numbered from 0");
      if (draws != 0 && next_draw >= draws)
        throw ParseError(at_line(line_no) + "too many draws for sample");
    }
    ++next_draw;
    std::vector<double> row(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      try {
        row[c] = parse_double(cells[5 + c]);
      } catch (const ParseError& e) {
        throw ParseError(at_line(line_no) + e.what());
      }
    }
    try {
      validate_probability_vector(row);
    } catch (const DomainError& e) {
      throw ParseError(at_line(line_no) + e.what());
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (samples.empty()) throw ParseError("predictions CSV: no data rows");
  if (draws == 0) draws = next_draw;
  else if (next_draw != draws)
    throw ParseError(at_line(line_no) + "last sample has " + std::to_string(next_draw) + " draws, expected " +
                     std::to_string(draws));
  return PredictionSet(std::move(method), std::move(samples), draws, classes, std::move(values));
}

PredictionSet read_predictions_csv_file(const std::string& path, std::string method) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_predictions_csv(in, std::move(method));
}

}  // namespace suq
