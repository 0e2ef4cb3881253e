// Copyright 2026 The piper2d Authors
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

#include "piper/chain_model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace piper {

namespace {

void validate(const std::vector<LinkParams>& links, const Vec2& gravity,
              const VecX& torque_limit) {
  require(!links.empty(), "model: n_links must be >= 1");
  for (size_t i = 0; i < links.size(); ++i) {
    const auto& p = links[i];
    const std::string where = "links[" + std::to_string(i) + "].";
    require(std::isfinite(p.length) && p.length > 0.0,
            where + "length: must be finite and > 0");
    require(std::isfinite(p.mass) && p.mass > 0.0,
            where + "mass: must be finite and > 0");
    require(std::isfinite(p.com_offset) && p.com_offset >= 0.0 &&
                p.com_offset <= p.length,
            where + "com_offset: must lie in [0, length]");
    require(std::isfinite(p.inertia_com) && p.inertia_com >= 0.0,
            where + "inertia_com: must be finite and >= 0");
  }
  require(std::isfinite(gravity.x()) && std::isfinite(gravity.y()),
          "gravity: must be finite");
  require(torque_limit.size() == static_cast<Index>(links.size()),
          "torque_limit: must have one entry per link");
  for (Index i = 0; i < torque_limit.size(); ++i) {
    require(std::isfinite(torque_limit(i)) && torque_limit(i) > 0.0,
            "torque_limit[" + std::to_string(i) + "]: must be > 0");
  }
}

}  // namespace

ChainModel ChainModel::make(std::vector<LinkParams> links, Vec2 gravity,
                            VecX torque_limit) {
  validate(links, gravity, torque_limit);
  return ChainModel(std::move(links), gravity, std::move(torque_limit));
}

ChainModel ChainModel::uniform(int n_links, double link_length,
                               double link_mass, double torque_limit,
                               Vec2 gravity) {
  require(n_links >= 1, "model: n_links must be >= 1");
  std::vector<LinkParams> links(static_cast<size_t>(n_links));
  for (auto& p : links) {
    p.length = link_length;
    p.mass = link_mass;
    p.com_offset = 0.5 * link_length;
    p.inertia_com = link_mass * link_length * link_length / 12.0;
  }
  VecX tl = VecX::Constant(n_links, torque_limit);
  return make(std::move(links), gravity, std::move(tl));
}

double ChainModel::total_length() const {
  double total = 0.0;
  for (const auto& p : links_) total += p.length;
  return total;
}

ChainModel ChainModel::without_gravity() const {
  return with_gravity(Vec2::Zero());
}

ChainModel ChainModel::with_gravity(const Vec2& g) const {
  ChainModel copy = *this;
  copy.gravity_ = g;
  return copy;
}

namespace {

using nlohmann::json;

double require_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ContractViolation(path + ": expected a number");
  return j.get<double>();
}

}  // namespace

ChainModel parse_chain_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ContractViolation(std::string("model JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ContractViolation("model JSON: expected object");
  for (const auto& [key, _] : doc.items()) {
    if (key != "links" && key != "gravity" && key != "torque_limit")
      throw ContractViolation("model JSON: unknown key \"" + key + "\"");
  }
  if (!doc.contains("links") || !doc["links"].is_array())
    throw ContractViolation("links: expected an array");
  if (!doc.contains("gravity") || !doc["gravity"].is_array() ||
      doc["gravity"].size() != 2)
    throw ContractViolation("gravity: expected [gx, gy]");

  std::vector<LinkParams> links;
  size_t idx = 0;
  for (const auto& jl : doc["links"]) {
    const std::string where = "links[" + std::to_string(idx) + "]";
    if (!jl.is_object()) throw ContractViolation(where + ": expected object");
    for (const auto& [key, _] : jl.items()) {
      if (key != "length" && key != "mass" && key != "com_offset" &&
          key != "inertia_com")
        throw ContractViolation(where + ": unknown key \"" + key + "\"");
    }
    LinkParams p;
    if (!jl.contains("length"))
      throw ContractViolation(where + ".length: missing");
    if (!jl.contains("mass")) throw ContractViolation(where + ".mass: missing");
    if (!jl.contains("com_offset"))
      throw ContractViolation(where + ".com_offset: missing");
    p.length = require_number(jl["length"], where + ".length");
    p.mass = require_number(jl["mass"], where + ".mass");
    p.com_offset = require_number(jl["com_offset"], where + ".com_offset");
    p.inertia_com = jl.contains("inertia_com")
                        ? require_number(jl["inertia_com"], where + ".inertia_com")
                        : p.mass * p.length * p.length / 12.0;
    links.push_back(p);
    ++idx;
  }

  Vec2 gravity(require_number(doc["gravity"][0], "gravity[0]"),
               require_number(doc["gravity"][1], "gravity[1]"));

  if (!doc.contains("torque_limit") || !doc["torque_limit"].is_array())
    throw ContractViolation("torque_limit: expected an array");
  VecX tl(static_cast<Index>(doc["torque_limit"].size()));
  for (Index i = 0; i < tl.size(); ++i) {
    tl(i) = require_number(doc["torque_limit"][static_cast<size_t>(i)],
                           "torque_limit[" + std::to_string(i) + "]");
  }
  return ChainModel::make(std::move(links), gravity, std::move(tl));
}

ChainModel load_chain_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractViolation("model file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_chain_model(ss.str());
}

std::string chain_model_to_json(const ChainModel& model) {
  json doc;
  doc["links"] = json::array();
  for (int i = 0; i < model.n_links(); ++i) {
    const auto& p = model.link(i);
    doc["links"].push_back({{"length", p.length},
                            {"mass", p.mass},
                            {"com_offset", p.com_offset},
                            {"inertia_com", p.inertia_com}});
  }
  doc["gravity"] = {model.gravity().x(), model.gravity().y()};
  doc["torque_limit"] = json::array();
  for (Index i = 0; i < model.torque_limit().size(); ++i)
    doc["torque_limit"].push_back(model.torque_limit()(i));
  return doc.dump(2);
}

}  // namespace piper
