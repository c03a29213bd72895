// Copyright 2026 The trialmatch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "trialmatch/market_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "trialmatch/error.hpp"
#include "trialmatch/random.hpp"

namespace trialmatch {
namespace {

using nlohmann::json;

std::vector<std::string> read_names(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) {
    throw Error(ErrorCode::kParse, std::string("missing array '") + key + "'");
  }
  std::vector<std::string> names;
  for (const auto& item : doc[key]) {
    if (!item.is_string()) {
      throw Error(ErrorCode::kParse, std::string("'") + key + "' must hold strings");
    }
    names.push_back(item.get<std::string>());
  }
  return names;
}

std::map<std::string, RawPreferences> read_prefs(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_object()) {
    throw Error(ErrorCode::kParse, std::string("missing object '") + key + "'");
  }
  std::map<std::string, RawPreferences> prefs;
  for (const auto& [owner, value] : doc[key].items()) {
    if (value.is_array()) {
      OrdinalList list;
      for (const auto& item : value) {
        if (!item.is_string()) {
          throw Error(ErrorCode::kParse, "ordered list of '" + owner + "' must hold names");
        }
        list.push_back(item.get<std::string>());
      }
      prefs.emplace(owner, std::move(list));
    } else if (value.is_object()) {
      CardinalList list;
      for (const auto& [name, v] : value.items()) {
        if (!v.is_number()) {
          throw Error(ErrorCode::kParse, "value map of '" + owner + "' must hold numbers");
        }
        list.emplace_back(name, v.get<double>());
      }
      prefs.emplace(owner, std::move(list));
    } else {
      throw Error(ErrorCode::kParse,
                  "preferences of '" + owner + "' must be a list or an object");
    }
  }
  return prefs;
}

// 1-based line and column of a byte offset.
std::pair<std::size_t, std::size_t> line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t k = 0; k < text.size() && k + 1 < byte; ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

RawMarket parse_market_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_of(text, e.byte);
    std::ostringstream msg;
    msg << "malformed JSON at line " << line << ", column " << col << ": " << e.what();
    throw Error(ErrorCode::kParse, msg.str());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kParse, "market must be a JSON object");

  RawMarket raw;
  raw.proposers = read_names(doc, "proposers");
  raw.acceptors = read_names(doc, "acceptors");
  raw.proposer_prefs = read_prefs(doc, "proposer_prefs");
  raw.acceptor_prefs = read_prefs(doc, "acceptor_prefs");
  return raw;
}

Market load_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open market file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return validate_market(parse_market_json(buffer.str()));
}

json market_to_json(const Market& market, bool ordinal) {
  json doc;
  const std::size_t n = market.num_proposers();
  const std::size_t m = market.num_acceptors();
  doc["proposers"] = json::array();
  doc["acceptors"] = json::array();
  for (std::size_t i = 0; i < n; ++i) doc["proposers"].push_back(market.proposer_name(i));
  for (std::size_t j = 0; j < m; ++j) doc["acceptors"].push_back(market.acceptor_name(j));

  json proposer_prefs = json::object();
  for (std::size_t i = 0; i < n; ++i) {
    json entry = ordinal ? json::array() : json::object();
    for (std::size_t j : market.proposer_ranking(i)) {
      if (ordinal) {
        entry.push_back(market.acceptor_name(j));
      } else {
        entry[market.acceptor_name(j)] = market.proposer_value(i, j);
      }
    }
    proposer_prefs[market.proposer_name(i)] = std::move(entry);
  }
  json acceptor_prefs = json::object();
  for (std::size_t j = 0; j < m; ++j) {
    json entry = ordinal ? json::array() : json::object();
    for (std::size_t i : market.acceptor_ranking(j)) {
      if (ordinal) {
        entry.push_back(market.proposer_name(i));
      } else {
        entry[market.proposer_name(i)] = market.acceptor_value(j, i);
      }
    }
    acceptor_prefs[market.acceptor_name(j)] = std::move(entry);
  }
  doc["proposer_prefs"] = std::move(proposer_prefs);
  doc["acceptor_prefs"] = std::move(acceptor_prefs);
  return doc;
}

Market generate_market(const MarketGenSpec& spec) {
  if (spec.num_proposers == 0 || spec.num_acceptors == 0) {
    throw Error(ErrorCode::kEmptySide, "generated market needs n >= 1 and m >= 1");
  }
  Rng rng = make_stream(spec.seed, 0);

  auto random_order = [&](std::size_t k) {
    std::vector<std::size_t> order(k);
    for (std::size_t x = 0; x < k; ++x) order[x] = x;
    shuffle_range(order.begin(), order.end(), rng);
    return order;
  };
  // Distinct values in (0, 1]; 1 - U keeps 0 out of range.
  auto random_values = [&](std::size_t k) {
    std::vector<double> values;
    while (values.size() < k) {
      const double v = 1.0 - uniform01(rng);
      if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
    }
    return values;
  };

  if (spec.mode == Cardinalization::kRank) {
    std::vector<std::vector<std::size_t>> proposer_orders;
    std::vector<std::vector<std::size_t>> acceptor_orders;
    for (std::size_t i = 0; i < spec.num_proposers; ++i) {
      proposer_orders.push_back(random_order(spec.num_acceptors));
    }
    for (std::size_t j = 0; j < spec.num_acceptors; ++j) {
      acceptor_orders.push_back(random_order(spec.num_proposers));
    }
    return market_from_orders(proposer_orders, acceptor_orders);
  }

  std::vector<std::vector<double>> proposer_values;
  std::vector<std::vector<double>> acceptor_values;
  for (std::size_t i = 0; i < spec.num_proposers; ++i) {
    proposer_values.push_back(random_values(spec.num_acceptors));
  }
  for (std::size_t j = 0; j < spec.num_acceptors; ++j) {
    acceptor_values.push_back(random_values(spec.num_proposers));
  }
  return market_from_values(proposer_values, acceptor_values);
}

namespace fixtures {

Market m2() { return market_from_orders({{0, 1}, {0, 1}}, {{1, 0}, {0, 1}}); }

Market m2b() { return market_from_orders({{0, 1}, {1, 0}}, {{1, 0}, {0, 1}}); }

Market aligned(std::size_t n) {
  std::vector<std::vector<std::size_t>> orders(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t r = 0; r < n; ++r) orders[i].push_back((i + r) % n);
  }
  return market_from_orders(orders, orders);
}

}  // namespace fixtures

}  // namespace trialmatch
