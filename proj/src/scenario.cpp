#include "cdrec/scenario.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "cdrec/error.hpp"

namespace cdrec {

namespace {

constexpr UserIndex kNone = static_cast<UserIndex>(-1);

struct DomainMask {
  const InteractionSet& set;
  std::vector<char> user_alive;
  std::vector<char> item_alive;
  std::vector<std::size_t> user_count;
  std::vector<std::size_t> item_count;

  explicit DomainMask(const InteractionSet& s)
      : set(s), user_alive(s.num_users(), 1), item_alive(s.num_items(), 1) {}

  void recount() {
    user_count.assign(set.num_users(), 0);
    item_count.assign(set.num_items(), 0);
    for (UserIndex u = 0; u < set.num_users(); ++u) {
      if (!user_alive[u]) continue;
      for (ItemIndex i : set.items_of(u)) {
        if (!item_alive[i]) continue;
        ++user_count[u];
        ++item_count[i];
      }
    }
  }

  std::vector<std::pair<UserIndex, ItemIndex>> alive_pairs() const {
    std::vector<std::pair<UserIndex, ItemIndex>> out;
    for (UserIndex u = 0; u < set.num_users(); ++u) {
      if (!user_alive[u]) continue;
      for (ItemIndex i : set.items_of(u))
        if (item_alive[i]) out.emplace_back(u, i);
    }
    return out;
  }
};

std::vector<UserIndex> cross_index(const InteractionSet& from, const InteractionSet& to) {
  std::vector<UserIndex> out(from.num_users(), kNone);
  for (UserIndex u = 0; u < from.num_users(); ++u) {
    if (auto v = to.find_user(from.user_id(u))) out[u] = *v;
  }
  return out;
}

// Rebuilds a set from surviving pairs; ids keep natural order.
InteractionSet compact(const DomainMask& mask) {
  std::vector<std::pair<std::string, std::string>> named;
  for (const auto& [u, i] : mask.alive_pairs())
    named.emplace_back(mask.set.user_id(u), mask.set.item_id(i));
  return InteractionSet::from_pairs(named);
}

void sort_natural(std::vector<std::string>& ids) {
  std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return natural_less(a, b); });
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

std::vector<std::string> read_id_list(const std::filesystem::path& p) {
  auto in = open_in(p);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

}  // namespace

std::vector<std::string> CrossDomainScenario::test_user_ids() const {
  std::vector<std::string> ids;
  ids.reserve(test_cases.size());
  for (const auto& tc : test_cases) ids.push_back(test_user_id(tc));
  return ids;
}

void filter_domains(InteractionSet& source, InteractionSet& target, const FilterThresholds& filter) {
  DomainMask s(source);
  DomainMask t(target);
  const auto s_to_t = cross_index(source, target);
  const auto t_to_s = cross_index(target, source);

  for (bool changed = true; changed;) {
    changed = false;
    s.recount();
    t.recount();

    // Decisions for both domains come from this pass's counts; the overlap
    // rule is symmetric, so an overlapping user is dropped from both sides.
    auto users_to_drop = [&](const DomainMask& mine, const DomainMask& other,
                             const std::vector<UserIndex>& link) {
      std::vector<char> drop(mine.set.num_users(), 0);
      for (UserIndex u = 0; u < mine.set.num_users(); ++u) {
        if (mine.user_count[u] == 0) continue;
        const UserIndex o = link[u];
        const bool overlapping = o != kNone && other.user_count[o] > 0;
        if (overlapping) {
          drop[u] = mine.user_count[u] < filter.min_overlap_interactions ||
                    other.user_count[o] < filter.min_overlap_interactions;
        } else {
          drop[u] = mine.user_count[u] < filter.min_other_interactions;
        }
      }
      return drop;
    };
    const auto drop_s = users_to_drop(s, t, s_to_t);
    const auto drop_t = users_to_drop(t, s, t_to_s);
    for (UserIndex u = 0; u < source.num_users(); ++u) {
      if (drop_s[u]) {
        s.user_alive[u] = 0;
        changed = true;
      }
    }
    for (UserIndex u = 0; u < target.num_users(); ++u) {
      if (drop_t[u]) {
        t.user_alive[u] = 0;
        changed = true;
      }
    }

    for (DomainMask* d : {&s, &t}) {
      for (ItemIndex i = 0; i < d->set.num_items(); ++i) {
        if (d->item_alive[i] && d->item_count[i] > 0 && d->item_count[i] < filter.min_other_interactions) {
          d->item_alive[i] = 0;
          changed = true;
        }
      }
    }
  }

  InteractionSet new_source = compact(s);
  InteractionSet new_target = compact(t);
  source = std::move(new_source);
  target = std::move(new_target);
}

CrossDomainScenario build_scenario(const InteractionSet& source_in, const InteractionSet& target_in,
                                   const FilterThresholds& filter, const SplitSeedConfig& cfg) {
  if (!(cfg.phi > 0.0 && cfg.phi <= 1.0)) throw ConfigError("phi must lie in (0, 1]");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw ConfigError("test fraction must lie in (0, 1)");

  bool any_shared = false;
  for (const auto& id : source_in.user_ids()) {
    if (target_in.find_user(id)) {
      any_shared = true;
      break;
    }
  }
  if (!any_shared) throw NoOverlap();

  InteractionSet source = source_in;
  InteractionSet target = target_in;
  filter_domains(source, target, filter);

  CrossDomainScenario sc;
  sc.split = cfg;
  sc.filter = filter;
  for (const auto& id : source.user_ids())
    if (target.find_user(id)) sc.overlap_users.push_back(id);
  if (sc.overlap_users.empty()) throw NoOverlap();

  Rng rng(cfg.seed);
  std::vector<std::string> shuffled = sc.overlap_users;
  rng.shuffle(std::span(shuffled));

  const auto n_test = static_cast<std::size_t>(
      std::llround(cfg.test_fraction * static_cast<double>(shuffled.size())));
  std::vector<std::string> test_ids;
  std::vector<std::string> rest;
  for (std::size_t k = 0; k < shuffled.size(); ++k) {
    const auto& id = shuffled[k];
    const bool eligible = target.items_of(*target.find_user(id)).size() >= 2;
    if (k < n_test && eligible) {
      test_ids.push_back(id);
    } else {
      rest.push_back(id);
    }
  }
  if (test_ids.empty())
    throw DegenerateScenario("no overlapping user has two target interactions to hold out");

  const auto n_train = static_cast<std::size_t>(std::llround(cfg.phi * static_cast<double>(rest.size())));
  rng.shuffle(std::span(rest));
  sc.train_overlap_users.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_train));
  sort_natural(sc.train_overlap_users);
  sort_natural(test_ids);

  // Held-out items are drawn in natural user order so the draw does not depend
  // on the shuffle above.
  std::vector<char> is_test(target.num_users(), 0);
  for (const auto& id : test_ids) {
    const UserIndex tu = *target.find_user(id);
    is_test[tu] = 1;
    const auto history = target.items_of(tu);
    TestCase tc;
    tc.source_user = *source.find_user(id);
    const std::size_t a = rng.below(history.size());
    std::size_t b = rng.below(history.size() - 1);
    if (b >= a) ++b;
    tc.test_item = history[a];
    tc.valid_item = history[b];
    tc.history.assign(history.begin(), history.end());
    sc.test_cases.push_back(std::move(tc));
  }

  std::vector<std::string> train_users;
  std::vector<UserIndex> old_index;
  for (UserIndex u = 0; u < target.num_users(); ++u) {
    if (is_test[u]) continue;
    train_users.push_back(target.user_id(u));
    old_index.push_back(u);
  }
  std::vector<std::pair<UserIndex, ItemIndex>> train_pairs;
  for (UserIndex nu = 0; nu < old_index.size(); ++nu)
    for (ItemIndex i : target.items_of(old_index[nu])) train_pairs.emplace_back(nu, i);

  sc.target = InteractionSet(std::move(train_users), target.item_ids(), train_pairs);
  sc.source = std::move(source);
  return sc;
}

InteractionSet build_unified(const CrossDomainScenario& sc) {
  std::vector<std::string> users = sc.source.user_ids();
  for (const auto& id : sc.target.user_ids()) users.push_back(id);
  sort_natural(users);
  users.erase(std::unique(users.begin(), users.end()), users.end());

  std::vector<std::string> items;
  items.reserve(sc.source.num_items() + sc.target.num_items());
  for (const auto& id : sc.source.item_ids()) items.push_back("s/" + id);
  for (const auto& id : sc.target.item_ids()) items.push_back("t/" + id);

  std::unordered_map<std::string_view, UserIndex> pos;
  for (UserIndex u = 0; u < users.size(); ++u) pos.emplace(users[u], u);

  const auto offset = static_cast<ItemIndex>(sc.source.num_items());
  std::vector<std::pair<UserIndex, ItemIndex>> pairs;
  pairs.reserve(sc.source.num_interactions() + sc.target.num_interactions());
  for (const auto& [u, i] : sc.source.pairs()) pairs.emplace_back(pos.at(sc.source.user_id(u)), i);
  for (const auto& [u, i] : sc.target.pairs())
    pairs.emplace_back(pos.at(sc.target.user_id(u)), offset + i);
  return InteractionSet(std::move(users), std::move(items), pairs);
}

std::vector<ItemIndex> sample_negatives(const InteractionSet& target, std::string_view user,
                                        std::span<const ItemIndex> exclude, std::size_t n, Rng& rng) {
  const std::size_t n_items = target.num_items();
  std::vector<char> blocked(n_items, 0);
  std::size_t n_blocked = 0;
  auto block = [&](ItemIndex i) {
    if (i < n_items && !blocked[i]) {
      blocked[i] = 1;
      ++n_blocked;
    }
  };
  if (auto u = target.find_user(user))
    for (ItemIndex i : target.items_of(*u)) block(i);
  for (ItemIndex i : exclude) block(i);

  const std::size_t pool = n_items - n_blocked;
  if (pool < n) throw InsufficientCandidates(pool);

  std::vector<ItemIndex> out;
  out.reserve(n);
  if (pool >= 2 * n) {
    while (out.size() < n) {
      const auto i = static_cast<ItemIndex>(rng.below(n_items));
      if (blocked[i]) continue;
      blocked[i] = 1;
      out.push_back(i);
    }
    return out;
  }
  std::vector<ItemIndex> candidates;
  candidates.reserve(pool);
  for (ItemIndex i = 0; i < n_items; ++i)
    if (!blocked[i]) candidates.push_back(i);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = k + rng.below(candidates.size() - k);
    std::swap(candidates[k], candidates[j]);
    out.push_back(candidates[k]);
  }
  return out;
}

void save_scenario(const CrossDomainScenario& sc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_out(dir / "source.tsv");
    sc.source.write_tsv(out);
  }
  {
    auto out = open_out(dir / "target_train.tsv");
    sc.target.write_tsv(out);
  }
  {
    auto out = open_out(dir / "target_items.txt");
    for (const auto& id : sc.target.item_ids()) out << id << '\n';
  }
  {
    auto out = open_out(dir / "overlap.txt");
    for (const auto& id : sc.overlap_users) out << id << '\n';
  }
  {
    auto out = open_out(dir / "train_overlap.txt");
    for (const auto& id : sc.train_overlap_users) out << id << '\n';
  }
  {
    auto out = open_out(dir / "test.tsv");
    for (const auto& tc : sc.test_cases)
      out << sc.test_user_id(tc) << '\t' << sc.target.item_id(tc.test_item) << '\t'
          << sc.target.item_id(tc.valid_item) << '\n';
  }
  {
    auto out = open_out(dir / "test_history.tsv");
    for (const auto& tc : sc.test_cases)
      for (ItemIndex i : tc.history) out << sc.test_user_id(tc) << '\t' << sc.target.item_id(i) << '\n';
  }
  {
    auto out = open_out(dir / "meta");
    out << "phi=" << format_double(sc.split.phi) << '\n'
        << "seed=" << sc.split.seed << '\n'
        << "test_fraction=" << format_double(sc.split.test_fraction) << '\n'
        << "min_overlap_interactions=" << sc.filter.min_overlap_interactions << '\n'
        << "min_other_interactions=" << sc.filter.min_other_interactions << '\n';
  }
}

CrossDomainScenario load_scenario(const std::filesystem::path& dir) {
  CrossDomainScenario sc;
  sc.source = load_interactions(dir / "source.tsv");

  std::vector<std::pair<std::string, std::string>> target_pairs;
  {
    auto in = open_in(dir / "target_train.tsv");
    target_pairs = read_pairs(in);
  }
  const auto target_items = read_id_list(dir / "target_items.txt");
  sc.target = InteractionSet::from_pairs(target_pairs, {}, target_items);
  sc.overlap_users = read_id_list(dir / "overlap.txt");
  sc.train_overlap_users = read_id_list(dir / "train_overlap.txt");

  std::map<std::string, std::vector<ItemIndex>, decltype([](const std::string& a, const std::string& b) {
             return natural_less(a, b);
           })>
      history;
  {
    auto in = open_in(dir / "test_history.tsv");
    for (const auto& [u, i] : read_pairs(in)) {
      auto item = sc.target.find_item(i);
      if (!item) throw DataError("test history refers to unknown target item '" + i + "'");
      history[u].push_back(*item);
    }
  }
  {
    auto in = open_in(dir / "test.tsv");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      std::istringstream fields(line);
      std::string user, test_item, valid_item;
      if (!std::getline(fields, user, '\t') || !std::getline(fields, test_item, '\t') ||
          !std::getline(fields, valid_item, '\t'))
        throw MalformedLine(line_no);
      auto su = sc.source.find_user(user);
      auto ti = sc.target.find_item(test_item);
      auto vi = sc.target.find_item(valid_item);
      if (!su || !ti || !vi) throw MalformedLine(line_no);
      TestCase tc{*su, *ti, *vi, history[user]};
      std::sort(tc.history.begin(), tc.history.end());
      sc.test_cases.push_back(std::move(tc));
    }
  }

  auto in = open_in(dir / "meta");
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "phi") sc.split.phi = std::stod(value);
      else if (key == "seed") sc.split.seed = std::stoull(value);
      else if (key == "test_fraction") sc.split.test_fraction = std::stod(value);
      else if (key == "min_overlap_interactions") sc.filter.min_overlap_interactions = std::stoul(value);
      else if (key == "min_other_interactions") sc.filter.min_other_interactions = std::stoul(value);
    } catch (const std::logic_error&) {
      throw DataError("bad meta value for '" + key + "'");
    }
  }
  return sc;
}

}  // namespace cdrec
