use crate::objective::EnergyModel;

/// Best model per complexity; loss strictly decreases as complexity grows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParetoFront {
    entries: Vec<EnergyModel>,
}

impl ParetoFront {
    pub fn new() -> Self {
        ParetoFront::default()
    }

    pub fn entries(&self) -> &[EnergyModel] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_loss(&self) -> Option<f64> {
        self.entries.last().map(|m| m.loss)
    }

    /// Whether a model of this cost and loss would be kept.
    pub fn admits(&self, complexity: u32, loss: f64) -> bool {
        loss.is_finite() && !self.entries.iter().any(|m| m.complexity <= complexity && m.loss <= loss)
    }

    /// Inserts `model` unless an existing entry is at least as simple and
    /// at least as accurate (earlier entries win ties). Returns whether it
    /// was kept.
    pub fn insert(&mut self, model: EnergyModel) -> bool {
        if !self.admits(model.complexity, model.loss) {
            return false;
        }
        self.entries.retain(|m| !(m.complexity >= model.complexity && m.loss >= model.loss));
        let at = self.entries.partition_point(|m| m.complexity < model.complexity);
        self.entries.insert(at, model);
        true
    }

    /// Annotates every entry with its score; see [`score_front`].
    pub fn score(&mut self, loss_floor: f64) {
        let scores = score_front(&self.entries, loss_floor);
        for (m, s) in self.entries.iter_mut().zip(scores) {
            m.score = Some(s);
        }
    }

    /// See [`select_best`].
    pub fn best(&self, loss_floor: f64) -> Option<&EnergyModel> {
        select_best(&self.entries, loss_floor)
    }

    pub fn into_entries(self) -> Vec<EnergyModel> {
        self.entries
    }
}

fn log_loss(loss: f64, floor: f64) -> f64 {
    loss.max(floor).ln()
}

/// −Δln(loss)/ΔC against the previous (simpler) entry; the first entry
/// scores 0. Losses below `loss_floor` count as the floor, so that
/// round-off-level improvements of exact fits earn no score.
pub fn score_front(entries: &[EnergyModel], loss_floor: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(entries.len());
    for (i, m) in entries.iter().enumerate() {
        if i == 0 {
            out.push(0.0);
            continue;
        }
        let prev = &entries[i - 1];
        let dc = m.complexity as f64 - prev.complexity as f64;
        let dl = log_loss(m.loss, loss_floor) - log_loss(prev.loss, loss_floor);
        out.push(if dc > 0.0 { -dl / dc } else { 0.0 });
    }
    out
}

/// Highest-scoring entry among those with loss ≤ 1.5 × the smallest loss
/// (floored at `loss_floor`); ties go to lower complexity. Entries without
/// a score count as 0.
pub fn select_best(entries: &[EnergyModel], loss_floor: f64) -> Option<&EnergyModel> {
    let min = entries.iter().map(|m| m.loss).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return entries.first();
    }
    let threshold = 1.5 * min.max(loss_floor);
    let mut best: Option<&EnergyModel> = None;
    for m in entries.iter().filter(|m| m.loss <= threshold) {
        let s = m.score.unwrap_or(0.0);
        let replace = match best {
            None => true,
            Some(b) => {
                let bs = b.score.unwrap_or(0.0);
                s > bs || (s == bs && m.complexity < b.complexity)
            }
        };
        if replace {
            best = Some(m);
        }
    }
    best
}
