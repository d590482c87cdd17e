#include "elastic/reclamation.hpp"

#include <cstring>
#include <unordered_map>
#include <utility>

namespace elastic {

namespace {
constexpr unsigned kAdvanceEvery = 64;

// Live domains by id. Thread bindings outlive short-lived domains, and a new
// domain may reuse the address of a destroyed one.
std::mutex& registry_mu() {
  static std::mutex mu;
  return mu;
}
std::unordered_map<std::uint64_t, EpochDomain*>& registry() {
  static std::unordered_map<std::uint64_t, EpochDomain*> live;
  return live;
}
std::atomic<std::uint64_t> next_domain_id{1};
}  // namespace

struct EpochDomain::Binding {
  struct Slot {
    std::uint64_t id;
    Record* rec;
  };
  std::vector<Slot> slots;
  ~Binding() {
    std::lock_guard lock(registry_mu());
    for (const Slot& s : slots) {
      auto it = registry().find(s.id);
      if (it != registry().end()) it->second->release_record(s.rec);
    }
  }
};

EpochDomain::EpochDomain() : id_(next_domain_id.fetch_add(1, std::memory_order_relaxed)) {
  std::lock_guard lock(registry_mu());
  registry().emplace(id_, this);
}

EpochDomain& EpochDomain::global() {
  static EpochDomain domain;
  return domain;
}

EpochDomain::~EpochDomain() {
  {
    std::lock_guard lock(registry_mu());
    registry().erase(id_);
  }
  Record* rec = records_.load(std::memory_order_acquire);
  while (rec != nullptr) {
    for (Bag& bag : rec->bags) free_bag(bag);
    Record* next = rec->next;
    delete rec;
    rec = next;
  }
  for (Bag& bag : orphans_) free_bag(bag);
}

EpochDomain::Record& EpochDomain::local() {
  thread_local Binding binding;
  for (const auto& s : binding.slots) {
    if (s.id == id_) return *s.rec;
  }
  Record* rec = acquire_record();
  binding.slots.push_back({id_, rec});
  return *rec;
}

EpochDomain::Record* EpochDomain::acquire_record() {
  for (Record* r = records_.load(std::memory_order_acquire); r != nullptr; r = r->next) {
    bool expected = false;
    if (!r->in_use.load(std::memory_order_relaxed) &&
        r->in_use.compare_exchange_strong(expected, true, std::memory_order_acq_rel)) {
      return r;
    }
  }
  auto* r = new Record;
  r->in_use.store(true, std::memory_order_relaxed);
  Record* head = records_.load(std::memory_order_relaxed);
  do {
    r->next = head;
  } while (!records_.compare_exchange_weak(head, r, std::memory_order_release,
                                           std::memory_order_relaxed));
  return r;
}

void EpochDomain::release_record(Record* rec) {
  rec->state.store(0, std::memory_order_release);
  {
    std::lock_guard lock(orphan_mu_);
    for (Bag& bag : rec->bags) {
      if (!bag.items.empty()) orphans_.push_back(std::move(bag));
      bag = Bag{};
    }
  }
  rec->nesting = 0;
  rec->since_advance = 0;
  rec->in_use.store(false, std::memory_order_release);
}

void EpochDomain::enter() {
  Record& rec = local();
  if (rec.nesting++ == 0) {
    const std::uint64_t e = epoch_.load(std::memory_order_acquire);
    rec.state.store((e << 1) | 1, std::memory_order_seq_cst);
    std::atomic_thread_fence(std::memory_order_seq_cst);
  }
}

void EpochDomain::exit() {
  Record& rec = local();
  if (--rec.nesting == 0) rec.state.store(0, std::memory_order_release);
}

void EpochDomain::retire(void* p, Deleter deleter, std::size_t size, std::size_t align) {
  Record& rec = local();
  const std::uint64_t e = epoch_.load(std::memory_order_acquire);
  Bag& bag = rec.bags[e % 3];
  if (bag.epoch != e) {
    // The slot last held epoch e - 3 or older.
    free_bag(bag);
    bag.epoch = e;
  }
  bag.items.push_back({p, deleter, size, align});
  retired_.fetch_add(1, std::memory_order_relaxed);
  if (++rec.since_advance >= kAdvanceEvery) {
    rec.since_advance = 0;
    try_advance();
  }
}

bool EpochDomain::try_advance() {
  std::uint64_t e = epoch_.load(std::memory_order_acquire);
  for (Record* r = records_.load(std::memory_order_acquire); r != nullptr; r = r->next) {
    const std::uint64_t s = r->state.load(std::memory_order_acquire);
    if ((s & 1) != 0 && (s >> 1) != e) return false;
  }
  const bool advanced =
      epoch_.compare_exchange_strong(e, e + 1, std::memory_order_acq_rel);
  const std::uint64_t now = epoch_.load(std::memory_order_acquire);
  Record& rec = local();
  for (Bag& bag : rec.bags) {
    if (bag.epoch + 2 <= now) free_bag(bag);
  }
  collect_orphans(now);
  return advanced;
}

void EpochDomain::collect_orphans(std::uint64_t now) {
  std::unique_lock lock(orphan_mu_, std::try_to_lock);
  if (!lock.owns_lock() || orphans_.empty()) return;
  std::erase_if(orphans_, [&](Bag& bag) {
    if (bag.epoch + 2 > now) return false;
    free_bag(bag);
    return true;
  });
}

void EpochDomain::free_one(const Retired& r) {
  r.deleter(r.ptr);
  if (poisoning()) std::memset(r.ptr, 0xDB, r.size);
  if (r.align > __STDCPP_DEFAULT_NEW_ALIGNMENT__) {
    ::operator delete(r.ptr, std::align_val_t{r.align});
  } else {
    ::operator delete(r.ptr);
  }
  freed_.fetch_add(1, std::memory_order_relaxed);
}

void EpochDomain::free_bag(Bag& bag) {
  for (const Retired& r : bag.items) free_one(r);
  bag.items.clear();
}

void EpochDomain::drain() {
  Record& rec = local();
  for (Bag& bag : rec.bags) free_bag(bag);
  std::lock_guard lock(orphan_mu_);
  for (Bag& bag : orphans_) free_bag(bag);
  orphans_.clear();
  epoch_.fetch_add(2, std::memory_order_acq_rel);
}

}  // namespace elastic
