#pragma once

#include <string>

#include <json.hpp>

#include "marti/agent.hpp"
#include "marti/config.hpp"

namespace marti {

inline nlohmann::json parser_json(const Parser& p) {
  using nlohmann::json;
  json tokens = json::array();
  for (TokenId t = 0; t < p.vocabulary_size(); ++t) tokens.push_back(p.token_text(t));
  json edges = json::array();
  for (const auto& e : p.edges()) edges.push_back({e.from, e.to, e.count, e.reward});
  return {{"alphabet_size", p.alphabet_size()},
          {"tokens", tokens},
          {"edges", edges},
          {"transitions", p.transitions()}};
}

/// Readable dump of a trained agent: configuration, sampling plan, codebooks
/// and every parser's token list and C/R edges ([from, to, count, reward]).
inline nlohmann::json agent_json(const Agent& agent) {
  using nlohmann::json;
  json config = json::object();
  std::istringstream lines(config_to_text(agent.config()));
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find(" = ");
    config[line.substr(0, eq)] = line.substr(eq + 3);
  }

  json columns = json::array();
  for (const auto& col : agent.columns()) {
    json c = {{"id", col.id()}, {"layer", col.layer()}};
    if (col.layer() == 1) {
      c["inputs"] = col.input_indices();
      c["bootstrap_vectors"] = col.bootstrap_size();
      if (col.codebook()) c["centroids"] = col.codebook()->centroids();
    } else {
      c["substrate"] = col.substrate();
    }
    if (col.parser()) c["parser"] = parser_json(*col.parser());
    columns.push_back(std::move(c));
  }

  json action_centroids = json::array();
  if (const auto& cb = agent.thalamus().action_coder().codebook()) action_centroids = cb->centroids();

  return {{"config", config},
          {"sensor_dim", agent.thalamus().sensor_dim()},
          {"actuator_dim", agent.thalamus().actuator_dim()},
          {"action_space", agent.action_space()},
          {"subsets", agent.thalamus().plan().subsets},
          {"action_centroids", action_centroids},
          {"steps", agent.steps()},
          {"inner_rewards", agent.inner_rewards()},
          {"columns", columns}};
}

}  // namespace marti
