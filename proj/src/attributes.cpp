#include "corepulse/attributes.hpp"

#include <algorithm>

#include "corepulse/error.hpp"

namespace corepulse {

std::vector<std::string> AttributeLayout::column_names() const {
  std::vector<std::string> names = {"gender_male", "gender_female", "gender_unknown"};
  for (int w = 1; w <= kWageLevels; ++w) names.push_back("wage_" + std::to_string(w));
  names.push_back("prepaid");
  for (auto p : {PhoneTechnology::g2, PhoneTechnology::g2_5, PhoneTechnology::g3,
                 PhoneTechnology::g3_5, PhoneTechnology::other}) {
    names.push_back("phone_" + to_string(p));
  }
  names.push_back("mobile_internet");
  for (const auto& r : regions) names.push_back("region_" + r);
  return names;
}

AttributeMatrix binarize(const ProfileTable& profiles, std::span<const SubscriberId> members) {
  AttributeMatrix out;
  std::vector<const SubscriberProfile*> rows;
  rows.reserve(members.size());
  for (SubscriberId id : members) {
    auto it = profiles.find(id);
    if (it == profiles.end()) throw Error("binarize: no profile for member " + std::to_string(id));
    rows.push_back(&it->second);
    out.layout.regions.push_back(it->second.region);
  }
  auto& regions = out.layout.regions;
  std::sort(regions.begin(), regions.end());
  regions.erase(std::unique(regions.begin(), regions.end()), regions.end());

  out.ids.assign(members.begin(), members.end());
  out.bits = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), out.layout.width());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& p = *rows[r];
    auto row = out.bits.row(static_cast<Eigen::Index>(r));
    row(AttributeLayout::kGender + static_cast<Eigen::Index>(p.gender)) = 1.0;
    row(AttributeLayout::kWage + p.wage - 1) = 1.0;
    row(AttributeLayout::kPrepaid) = p.prepaid ? 1.0 : 0.0;
    row(AttributeLayout::kPhone + static_cast<Eigen::Index>(p.phone_technology)) = 1.0;
    row(AttributeLayout::kMobileInternet) = p.mobile_internet ? 1.0 : 0.0;
    const auto region_pos = std::lower_bound(regions.begin(), regions.end(), p.region) - regions.begin();
    row(AttributeLayout::kRegion + region_pos) = 1.0;
  }
  return out;
}

DecodedAttributes decode(const AttributeLayout& layout, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  auto hot = [&](Eigen::Index start, Eigen::Index len) {
    Eigen::Index idx = 0;
    row.segment(start, len).maxCoeff(&idx);
    return idx;
  };
  DecodedAttributes d;
  d.gender = static_cast<Gender>(hot(AttributeLayout::kGender, 3));
  d.wage = static_cast<int>(hot(AttributeLayout::kWage, kWageLevels)) + 1;
  d.prepaid = row(AttributeLayout::kPrepaid) > 0.5;
  d.phone_technology = static_cast<PhoneTechnology>(hot(AttributeLayout::kPhone, 5));
  d.mobile_internet = row(AttributeLayout::kMobileInternet) > 0.5;
  if (!layout.regions.empty()) {
    d.region = layout.regions[static_cast<std::size_t>(
        hot(AttributeLayout::kRegion, static_cast<Eigen::Index>(layout.regions.size())))];
  }
  return d;
}

}  // namespace corepulse
