#pragma once

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>

#include "ruinlab/risk_model.hpp"

namespace ruinlab {

// Model files:
//   {"lambda": 1.0, "theta": 0.1, "claims": {"kind": "mixture", ...}}
// with exactly one of "theta" / "premium_rate". Claim kinds:
//   {"kind": "exponential", "rate": b}
//   {"kind": "mixture", "weights": [...], "rates": [...]}
//   {"kind": "gamma", "shape": k, "scale": s}
//   {"kind": "deterministic", "size": z}

namespace detail {

inline double json_number(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number())
    throw Error(std::string("model json: missing numeric field '") + key +
                "'");
  return j.at(key).get<double>();
}

inline std::vector<double> json_numbers(const nlohmann::json& j,
                                        const char* key) {
  if (!j.contains(key) || !j.at(key).is_array())
    throw Error(std::string("model json: missing array field '") + key + "'");
  std::vector<double> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_number())
      throw Error(std::string("model json: non-numeric entry in '") + key +
                  "'");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace detail

inline ClaimDistribution claims_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
    throw Error("model json: claims needs a string field 'kind'");
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "exponential")
    return Exponential{detail::json_number(j, "rate")};
  if (kind == "mixture")
    return ExpMixture{detail::json_numbers(j, "weights"),
                      detail::json_numbers(j, "rates")};
  if (kind == "gamma")
    return GammaClaims{detail::json_number(j, "shape"),
                       detail::json_number(j, "scale")};
  if (kind == "deterministic")
    return Deterministic{detail::json_number(j, "size")};
  throw Error("model json: unknown claims kind '" + kind + "'");
}

inline nlohmann::json claims_to_json(const ClaimDistribution& dist) {
  nlohmann::json j;
  if (const auto* e = std::get_if<Exponential>(&dist)) {
    j["kind"] = "exponential";
    j["rate"] = e->rate;
  } else if (const auto* m = std::get_if<ExpMixture>(&dist)) {
    j["kind"] = "mixture";
    j["weights"] = m->weights;
    j["rates"] = m->rates;
  } else if (const auto* g = std::get_if<GammaClaims>(&dist)) {
    j["kind"] = "gamma";
    j["shape"] = g->shape;
    j["scale"] = g->scale;
  } else {
    j["kind"] = "deterministic";
    j["size"] = std::get<Deterministic>(dist).value;
  }
  return j;
}

inline RiskModel model_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("model json: top level must be an object");
  if (!j.contains("claims"))
    throw Error("model json: missing object field 'claims'");
  double lambda = detail::json_number(j, "lambda");
  ClaimDistribution claims = claims_from_json(j.at("claims"));
  bool has_theta = j.contains("theta");
  bool has_premium = j.contains("premium_rate");
  if (has_theta == has_premium)
    throw Error("model json: give exactly one of 'theta' / 'premium_rate'");
  if (has_theta)
    return RiskModel::from_loading(lambda, detail::json_number(j, "theta"),
                                   std::move(claims));
  return RiskModel(lambda, detail::json_number(j, "premium_rate"),
                   std::move(claims));
}

// Canonical serialization: premium_rate is the stored quantity, so a model
// given by loading round-trips through the implied premium.
inline nlohmann::json model_to_json(const RiskModel& m) {
  nlohmann::json j;
  j["lambda"] = m.lambda();
  j["premium_rate"] = m.premium_rate();
  j["claims"] = claims_to_json(m.claims());
  return j;
}

inline RiskModel load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open model file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("cannot parse model file " + path + ": " + e.what());
  }
  return model_from_json(j);
}

// Key-order-stable dump of the canonical form; hashing it identifies the
// model in report metadata.
inline std::string model_signature(const RiskModel& m) {
  return model_to_json(m).dump();
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string model_hash_hex(const RiskModel& m) {
  std::uint64_t h = fnv1a64(model_signature(m));
  std::ostringstream out;
  out << std::hex;
  for (int i = 15; i >= 0; --i) out << ((h >> (4 * i)) & 0xf);
  return out.str();
}

}  // namespace ruinlab
