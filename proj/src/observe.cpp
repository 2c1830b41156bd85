#include "gradsynth/observe.hpp"

#include <stdexcept>

namespace gradsynth {

namespace {

ad::NodeId log_prob_of(ad::Tape& tape, ad::NodeId dist, int value, const char* what) {
  if (value < 0 || value >= tape.length(dist))
    throw std::invalid_argument(std::string("observe: expected ") + what + " outside the domain");
  return tape.log(tape.select(dist, value));
}

}  // namespace

ad::NodeId observe_log_likelihood(LiftedMachine& m, const LiftedState& s,
                                  const TaskOutput& expected) {
  ad::Tape& tape = m.tape();
  const ModelSpec& spec = m.spec();
  const RegNodes r = m.observed(s);
  const auto slot_for = [&](ValueKind k) { return spec.typed() ? r[k] : r.slot[0]; };

  switch (expected.kind) {
    case OutputKind::Int:
      return log_prob_of(tape, slot_for(ValueKind::Int), expected.scalar, "integer");
    case OutputKind::Bool:
      return log_prob_of(tape, slot_for(ValueKind::Bool), expected.scalar, "boolean");
    case OutputKind::List: {
      ad::NodeId ptr = slot_for(ValueKind::Ptr);
      std::vector<ad::Term> terms;
      for (int v : expected.list) {
        terms.push_back(ad::Term(log_prob_of(tape, m.gather_data(s, ptr), v, "element")));
        ptr = m.gather_next(s, ptr);
      }
      terms.push_back(ad::Term(tape.log(tape.select(ptr, 0))));
      return tape.weighted_sum(1, terms);
    }
  }
  throw std::logic_error("observe: unknown output kind");
}

ad::NodeId batch_loss(LiftedMachine& m, const ParamNodes& params,
                      const std::vector<Example>& batch) {
  ad::Tape& tape = m.tape();
  std::vector<ad::Term> terms;
  for (const Example& ex : batch) {
    const LiftedState fin = m.run(params, ex.inputs);
    terms.push_back(ad::Term(observe_log_likelihood(m, fin, ex.output), -1.0));
  }
  const double w = m.spec().entropy_weight;
  if (w > 0.0) {
    // Entropy bonus: loss -= w * H(p) for every slot, i.e. += w * sum p log p.
    for (ad::NodeId d : params.slots)
      terms.push_back(ad::Term(tape.dot(d, tape.log(d)), w));
  }
  return tape.weighted_sum(1, terms);
}

}  // namespace gradsynth
