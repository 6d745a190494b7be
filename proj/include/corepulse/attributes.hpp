#pragma once

#include <Eigen/Dense>

#include <span>
#include <string>
#include <vector>

#include "corepulse/graphcore.hpp"

namespace corepulse {

/// Bit layout of the binary attribute vector fed to the community model:
///
///   [0, 3)    gender one-hot      (male, female, unknown)
///   [3, 8)    wage one-hot        (levels 1..5)
///   8         prepaid
///   [9, 14)   phone technology    (2G, 2.5G, 3G, 3.5G, other)
///   14        mobile internet
///   [15, ..)  region one-hot over `regions` (sorted)
struct AttributeLayout {
  static constexpr Eigen::Index kGender = 0;
  static constexpr Eigen::Index kWage = 3;
  static constexpr Eigen::Index kPrepaid = 8;
  static constexpr Eigen::Index kPhone = 9;
  static constexpr Eigen::Index kMobileInternet = 14;
  static constexpr Eigen::Index kRegion = 15;

  std::vector<std::string> regions;

  Eigen::Index width() const { return kRegion + static_cast<Eigen::Index>(regions.size()); }
  std::vector<std::string> column_names() const;
};

struct AttributeMatrix {
  AttributeLayout layout;
  std::vector<SubscriberId> ids;  // row order
  Eigen::MatrixXd bits;           // ids.size() x layout.width()
};

/// Encodes the members' profiles. The region block spans only the regions
/// present among `members`. Throws Error naming the first member without a
/// profile.
AttributeMatrix binarize(const ProfileTable& profiles, std::span<const SubscriberId> members);

/// Categorical fields recovered from one encoded row.
struct DecodedAttributes {
  Gender gender = Gender::unknown;
  int wage = 1;
  bool prepaid = false;
  PhoneTechnology phone_technology = PhoneTechnology::g2;
  bool mobile_internet = false;
  std::string region;
};

DecodedAttributes decode(const AttributeLayout& layout, const Eigen::Ref<const Eigen::RowVectorXd>& row);

}  // namespace corepulse
