#include "ctrkit/params.h"

#include <algorithm>

namespace ctrkit {

Parameter::Parameter(std::string name_, ParamRole role_, Tensor init)
    : name(std::move(name_)), role(role_), value(std::move(init)) {
  grad = Tensor(value.rows(), value.cols());
  if (row_sparse()) touch_slot_.assign(value.rows(), -1);
}

void Parameter::touch(std::uint32_t row) {
  if (!row_sparse()) return;
  auto& slot = touch_slot_[row];
  if (slot < 0) {
    slot = static_cast<std::int32_t>(touched_rows_.size());
    touched_rows_.push_back(row);
    touch_counts_.push_back(1);
  } else {
    ++touch_counts_[static_cast<std::size_t>(slot)];
  }
}

void Parameter::zero_grad() {
  if (!row_sparse()) {
    grad.fill(0.0);
    return;
  }
  for (auto row : touched_rows_) {
    auto g = grad.row_span(row);
    std::fill(g.begin(), g.end(), 0.0);
    touch_slot_[row] = -1;
  }
  touched_rows_.clear();
  touch_counts_.clear();
}

ParamStore::ParamStore(const ParamStore& other) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) params_.push_back(std::make_unique<Parameter>(*p));
  index_ = other.index_;
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Parameter& ParamStore::add(std::string name, ParamRole role, Tensor init) {
  if (contains(name)) throw Error("duplicate parameter '" + name + "'");
  index_.emplace(name, params_.size());
  params_.push_back(std::make_unique<Parameter>(std::move(name), role, std::move(init)));
  return *params_.back();
}

Parameter* ParamStore::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(std::string_view name) const {
  return const_cast<ParamStore*>(this)->find(name);
}

bool ParamStore::contains(std::string_view name) const { return find(name) != nullptr; }

Parameter& ParamStore::at(std::string_view name) {
  if (auto* p = find(name)) return *p;
  throw Error("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParamStore::at(std::string_view name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

std::size_t ParamStore::coordinate_count() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p->value.size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

}  // namespace ctrkit
