use super::BehaviorSequence;

/// Splits every sequence at `cutoff`: events strictly before go to train,
/// the rest to test. Users absent from one side are omitted from it.
pub fn split_by_time(seqs: &[BehaviorSequence], cutoff: u64) -> (Vec<BehaviorSequence>, Vec<BehaviorSequence>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in seqs {
        let k = s.events.partition_point(|e| e.timestamp < cutoff);
        if k > 0 {
            train.push(BehaviorSequence {
                user_id: s.user_id,
                events: s.events[..k].to_vec(),
            });
        }
        if k < s.events.len() {
            test.push(BehaviorSequence {
                user_id: s.user_id,
                events: s.events[k..].to_vec(),
            });
        }
    }
    let total: usize = seqs.iter().map(BehaviorSequence::len).sum();
    if total > 0 && (train.is_empty() || test.is_empty()) {
        log::warn!("cutoff {cutoff} lies outside the observed time range; one side of the split is empty");
    }
    (train, test)
}
