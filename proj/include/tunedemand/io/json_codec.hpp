#pragma once

#include <json.hpp>

#include <Eigen/Dense>

#include "tunedemand/bayes.hpp"
#include "tunedemand/clustering.hpp"
#include "tunedemand/envelope.hpp"
#include "tunedemand/estimation.hpp"
#include "tunedemand/forced_bayes.hpp"
#include "tunedemand/optimizer.hpp"

namespace nlohmann {

// Vectors as arrays, matrices as arrays of rows.
template <>
struct adl_serializer<Eigen::VectorXd> {
  static void to_json(json& j, const Eigen::VectorXd& v);
  static void from_json(const json& j, Eigen::VectorXd& v);
};

template <>
struct adl_serializer<Eigen::MatrixXd> {
  static void to_json(json& j, const Eigen::MatrixXd& m);
  static void from_json(const json& j, Eigen::MatrixXd& m);
};

}  // namespace nlohmann

namespace tunedemand {

using json = nlohmann::json;

void to_json(json& j, const CovariatePath& p);
void from_json(const json& j, CovariatePath& p);
void to_json(json& j, const DemandCurve& c);
void from_json(const json& j, DemandCurve& c);
void to_json(json& j, const ChangePoints& t);
void from_json(const json& j, ChangePoints& t);
void to_json(json& j, const EnvelopeFit& f);
void from_json(const json& j, EnvelopeFit& f);
void to_json(json& j, const RegressionFit& f);
void to_json(json& j, const ControlChart& c);
void to_json(json& j, const BudgetPolicy& p);
void from_json(const json& j, BudgetPolicy& p);
void to_json(json& j, const AllocationPath& a);
void to_json(json& j, const SchemeComparison& s);
void to_json(json& j, const KMeansResult& r);
void to_json(json& j, const PredictiveQuantiles& q);
void to_json(json& j, const ArtistPrior& a);
void from_json(const json& j, ArtistPrior& a);
void to_json(json& j, const NullModelSpec& s);
void from_json(const json& j, NullModelSpec& s);
void to_json(json& j, const McmcConfig& c);
void from_json(const json& j, McmcConfig& c);
void to_json(json& j, const ForcedModelSpec& s);
void from_json(const json& j, ForcedModelSpec& s);

/// Fields of `patch` override those of `base`, recursively for objects.
json merged(json base, const json& patch);

}  // namespace tunedemand
