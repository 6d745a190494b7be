#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "corepulse/community.hpp"
#include "corepulse/graphcore.hpp"
#include "corepulse/month.hpp"

namespace corepulse {

/// Latent-index coefficients of the adoption process. Keys of `gamma` are
/// design covariate names (see covariate_names()).
struct AdoptionCoefficients {
  double beta0 = -6.0;
  double beta_core = 0.70;
  double beta_peri = 0.14;
  std::map<std::string, double> gamma;
  double core_shift = -1.0;  // added for planted core subscribers
};

AdoptionCoefficients default_adoption_coefficients();

struct GenConfig {
  int n_nodes = 2000;
  int k_communities = 30;
  double core_fraction = 0.05;
  int core_min_memberships = 5;
  double core_extra_mean = 2.0;      // core: min + Poisson(mean)
  double peri_second_prob = 0.3;     // periphery: 1 + Bernoulli(p)
  double affiliation_scale = 0.70;   // typical F entry
  double activity_sigma = 1.2;       // lognormal spread of node activity
  double membership_exponent = 0.5;  // F entries shrink as m^-exponent with m memberships
  double attribute_weight = 1.0;     // sd of community offsets on attribute logits
  int regions = 8;
  StudyWindow window;
  AdoptionCoefficients adoption = default_adoption_coefficients();
  double sigma_u = 0.3;  // community taste shock sd
  std::uint64_t seed = 1;

  void validate() const;  // throws Error
};

/// Expected count and binomial variance of one attribute category under the
/// generating probabilities.
struct AttributeExpectation {
  double expected = 0.0;
  double variance = 0.0;
};

struct GroundTruth {
  std::vector<std::vector<SubscriberId>> communities;  // planted members, sorted
  std::map<SubscriberId, int> memberships;             // count per subscriber
  std::set<SubscriberId> core;
  std::vector<double> community_shock;  // u_c
  AdoptionCoefficients coefficients;
  double sigma_u = 0.0;
  std::map<SubscriberId, Month> adoptions;
  std::map<std::string, AttributeExpectation> attribute_expectation;
};

struct SyntheticPopulation {
  SocialGraph graph;
  std::vector<SubscriberProfile> profiles;
  GroundTruth truth;
};

/// Planted affiliations, edges over all pairs with p = 1 - exp(-F_u.F_v),
/// categorical attributes from community-weighted softmax around fixed base
/// rates. Throws Error when no edge is produced.
SyntheticPopulation generate_network(const GenConfig& cfg);

/// Monthly latent-index adoption; absorbing. Fills nothing in `truth`.
std::map<SubscriberId, Month> simulate_adoption(const SocialGraph& graph, const GroundTruth& truth,
                                                const std::vector<SubscriberProfile>& profiles,
                                                const GenConfig& cfg);

/// generate_network followed by simulate_adoption (stored in truth).
SyntheticPopulation simulate(const GenConfig& cfg);

/// One call in each direction per edge per month, located at the caller's
/// home region, ordered by timestamp.
std::vector<CallEvent> emit_cdr(const SocialGraph& graph, const std::vector<SubscriberProfile>& profiles,
                                const StudyWindow& window, std::uint64_t seed);

void write_truth_json(std::ostream& out, const GroundTruth& truth, const GenConfig& cfg);

/// Writes cdr.csv, subscribers.csv, adoptions.csv and truth.json into `dir`.
void emit(const SyntheticPopulation& pop, const GenConfig& cfg, const std::string& dir);

// ---------------------------------------------------------------------------
// Small planted instances for community-recovery checks.

struct PlantedInstance {
  AffiliationData data;
  Eigen::MatrixXd F;  // planted affiliations
  std::vector<std::vector<SubscriberId>> communities;  // node indices as ids
};

struct PlantedOptions {
  int nodes = 100;
  int communities = 3;
  double overlap_prob = 0.15;  // chance of a second membership
  double strength = 1.0;       // F entry for a membership
  double background = 0.01;    // edge probability outside shared communities
  int attributes_per_community = 3;
  double attribute_weight = 3.0;
};

PlantedInstance sample_planted(const PlantedOptions& opts, std::uint64_t seed);

}  // namespace corepulse
