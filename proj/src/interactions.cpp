#include "cdrec/interactions.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "cdrec/error.hpp"

namespace cdrec {

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string_view strip_zeros(std::string_view s) {
  const auto first = s.find_first_not_of('0');
  return first == std::string_view::npos ? s.substr(s.size() - 1) : s.substr(first);
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

bool natural_less(std::string_view a, std::string_view b) {
  const bool na = all_digits(a);
  const bool nb = all_digits(b);
  if (na != nb) return na;
  if (na) {
    const auto sa = strip_zeros(a);
    const auto sb = strip_zeros(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

InteractionSet::InteractionSet(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                               std::span<const std::pair<UserIndex, ItemIndex>> pairs)
    : user_ids_(std::move(user_ids)), item_ids_(std::move(item_ids)) {
  for (std::size_t u = 0; u < user_ids_.size(); ++u) {
    if (!user_lookup_.emplace(user_ids_[u], static_cast<UserIndex>(u)).second)
      throw std::invalid_argument("duplicate user id '" + user_ids_[u] + "'");
  }
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!item_lookup_.emplace(item_ids_[i], static_cast<ItemIndex>(i)).second)
      throw std::invalid_argument("duplicate item id '" + item_ids_[i] + "'");
  }
  user_items_.resize(user_ids_.size());
  item_users_.resize(item_ids_.size());
  for (const auto& [u, i] : pairs) {
    if (u >= user_ids_.size() || i >= item_ids_.size())
      throw std::out_of_range("interaction refers to an unknown index");
    user_items_[u].push_back(i);
  }
  for (auto& items : user_items_) {
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
  }
  for (std::size_t u = 0; u < user_items_.size(); ++u) {
    for (ItemIndex i : user_items_[u]) item_users_[i].push_back(static_cast<UserIndex>(u));
    num_pairs_ += user_items_[u].size();
  }
}

InteractionSet InteractionSet::from_pairs(std::span<const std::pair<std::string, std::string>> pairs,
                                          std::span<const std::string> extra_users,
                                          std::span<const std::string> extra_items) {
  std::vector<std::string> users(extra_users.begin(), extra_users.end());
  std::vector<std::string> items(extra_items.begin(), extra_items.end());
  for (const auto& [u, i] : pairs) {
    users.push_back(u);
    items.push_back(i);
  }
  auto canonical = [](std::vector<std::string>& ids) {
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return natural_less(a, b); });
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  };
  canonical(users);
  canonical(items);

  std::unordered_map<std::string_view, UserIndex> user_pos;
  std::unordered_map<std::string_view, ItemIndex> item_pos;
  for (std::size_t k = 0; k < users.size(); ++k) user_pos.emplace(users[k], static_cast<UserIndex>(k));
  for (std::size_t k = 0; k < items.size(); ++k) item_pos.emplace(items[k], static_cast<ItemIndex>(k));

  std::vector<std::pair<UserIndex, ItemIndex>> indexed;
  indexed.reserve(pairs.size());
  for (const auto& [u, i] : pairs) indexed.emplace_back(user_pos.at(u), item_pos.at(i));
  return InteractionSet(std::move(users), std::move(items), indexed);
}

std::optional<UserIndex> InteractionSet::find_user(std::string_view id) const {
  auto it = user_lookup_.find(std::string(id));
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<ItemIndex> InteractionSet::find_item(std::string_view id) const {
  auto it = item_lookup_.find(std::string(id));
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

bool InteractionSet::contains(UserIndex u, ItemIndex i) const {
  const auto& items = user_items_.at(u);
  return std::binary_search(items.begin(), items.end(), i);
}

std::vector<std::pair<UserIndex, ItemIndex>> InteractionSet::pairs() const {
  std::vector<std::pair<UserIndex, ItemIndex>> out;
  out.reserve(num_pairs_);
  for (std::size_t u = 0; u < user_items_.size(); ++u)
    for (ItemIndex i : user_items_[u]) out.emplace_back(static_cast<UserIndex>(u), i);
  return out;
}

void InteractionSet::write_tsv(std::ostream& out) const {
  for (std::size_t u = 0; u < user_items_.size(); ++u)
    for (ItemIndex i : user_items_[u]) out << user_ids_[u] << '\t' << item_ids_[i] << '\n';
}

std::vector<std::pair<std::string, std::string>> read_pairs(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = trim_cr(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) throw MalformedLine(line_no);
    std::string_view item = line.substr(tab + 1);
    item = item.substr(0, item.find('\t'));
    if (item.empty()) throw MalformedLine(line_no);
    pairs.emplace_back(std::string(line.substr(0, tab)), std::string(item));
  }
  return pairs;
}

InteractionSet parse_interactions(std::istream& in) {
  const auto pairs = read_pairs(in);
  if (pairs.empty()) throw EmptyDataset();
  return InteractionSet::from_pairs(pairs);
}

InteractionSet load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_interactions(in);
}

}  // namespace cdrec
