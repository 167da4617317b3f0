//! Exhaustive sequential-game oracle. Every joint assignment of every
//! variable is enumerated; no factorization or elimination is involved.

use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Defender,
    Attacker,
}

pub enum Node {
    /// `table[config * card + state]`, parent configurations row-major
    /// with the last parent fastest.
    Chance { parents: Vec<usize>, table: Vec<f64> },
    Decision { side: Side, info: Vec<usize> },
}

pub struct Game {
    pub card: Vec<usize>,
    pub nodes: Vec<Node>,
    /// Decision variables in stage order.
    pub stages: Vec<usize>,
    pub utility: Box<dyn Fn(Side, &[usize]) -> f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub reachable: bool,
    pub eu: Vec<Option<f64>>,
    pub maximizers: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub var: usize,
    pub side: Side,
    pub info: Vec<usize>,
    pub entries: BTreeMap<Vec<usize>, Entry>,
}

impl Policy {
    fn share(&self, x: &[usize]) -> f64 {
        let key: Vec<usize> = self.info.iter().map(|&i| x[i]).collect();
        let e = &self.entries[&key];
        if e.maximizers.contains(&x[self.var]) {
            1.0 / e.maximizers.len() as f64
        } else {
            0.0
        }
    }
}

pub struct Solved {
    pub pointer: usize,
    /// Indexed by stage position; `None` before the pointer.
    pub policies: Vec<Option<Policy>>,
}

const FLOOR: f64 = 1e-12;

impl Game {
    fn configs(cards: &[usize]) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for &c in cards {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..c).map(move |s| {
                        let mut q = p.clone();
                        q.push(s);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn chance_weight(&self, x: &[usize]) -> f64 {
        let mut w = 1.0;
        for (v, node) in self.nodes.iter().enumerate() {
            if let Node::Chance { parents, table } = node {
                let cfg = parents.iter().fold(0, |acc, &p| acc * self.card[p] + x[p]);
                w *= table[cfg * self.card[v] + x[v]];
            }
        }
        w
    }

    fn side(&self, v: usize) -> Side {
        match &self.nodes[v] {
            Node::Decision { side, .. } => *side,
            Node::Chance { .. } => panic!("not a decision"),
        }
    }

    fn info(&self, v: usize) -> &[usize] {
        match &self.nodes[v] {
            Node::Decision { info, .. } => info,
            Node::Chance { .. } => panic!("not a decision"),
        }
    }

    /// All assignments with positive chance weight that satisfy `evidence`.
    fn support(&self, evidence: &dyn Fn(&[usize]) -> bool) -> Vec<(Vec<usize>, f64)> {
        Self::configs(&self.card)
            .into_iter()
            .filter(|x| evidence(x))
            .map(|x| {
                let w = self.chance_weight(&x);
                (x, w)
            })
            .filter(|(_, w)| *w > 0.0)
            .collect()
    }

    /// Decision weight of stage `j` while policies `solved` are known.
    fn decision_weight(&self, j: usize, x: &[usize], policies: &[Option<Policy>]) -> f64 {
        match &policies[j] {
            Some(p) => p.share(x),
            None => 1.0 / self.card[self.stages[j]] as f64,
        }
    }

    /// Backward induction over stages `pointer..`. Earlier decisions and
    /// not yet solved ones are uniform, as in the engine.
    pub fn solve(&self, pointer: usize, evidence: &dyn Fn(&[usize]) -> bool, tie: f64) -> Solved {
        let support = self.support(evidence);
        let mut policies: Vec<Option<Policy>> = (0..self.stages.len()).map(|_| None).collect();
        for k in (pointer..self.stages.len()).rev() {
            let var = self.stages[k];
            let side = self.side(var);
            let info = self.info(var).to_vec();
            let n = self.card[var];
            let mut acc: BTreeMap<Vec<usize>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            let mut total = 0.0;
            for (x, cw) in &support {
                let mut w = *cw;
                for j in 0..self.stages.len() {
                    if j != k {
                        w *= self.decision_weight(j, x, &policies);
                    }
                }
                if w == 0.0 {
                    continue;
                }
                total += w;
                let key: Vec<usize> = info.iter().map(|&i| x[i]).collect();
                let e = acc.entry(key).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
                e.0[x[var]] += w * (self.utility)(side, x);
                e.1[x[var]] += w;
            }
            let cards: Vec<usize> = info.iter().map(|&i| self.card[i]).collect();
            let mut entries = BTreeMap::new();
            for key in Self::configs(&cards) {
                let entry = match acc.get(&key) {
                    Some((num, den)) if den.iter().sum::<f64>() > FLOOR * total => {
                        let pc: f64 = den.iter().sum();
                        let eu: Vec<Option<f64>> = num
                            .iter()
                            .zip(den)
                            .map(|(a, b)| (*b > FLOOR * pc).then(|| a / b))
                            .collect();
                        let best = eu.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
                        let maximizers = (0..n).filter(|&s| eu[s].is_some_and(|v| v >= best - tie)).collect();
                        Entry {
                            reachable: true,
                            eu,
                            maximizers,
                        }
                    }
                    _ => Entry {
                        reachable: false,
                        eu: vec![None; n],
                        maximizers: (0..n).collect(),
                    },
                };
                entries.insert(key, entry);
            }
            policies[k] = Some(Policy {
                var,
                side,
                info,
                entries,
            });
        }
        Solved { pointer, policies }
    }

    /// Expected utility of `side` given `evidence` (and `extra`), with the
    /// solved stages following their policies and earlier ones uniform.
    pub fn expected(
        &self,
        solved: &Solved,
        side: Side,
        evidence: &dyn Fn(&[usize]) -> bool,
        skip_stage: Option<usize>,
    ) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, cw) in self.support(evidence) {
            let mut w = cw;
            for j in 0..self.stages.len() {
                if Some(j) != skip_stage {
                    w *= self.decision_weight(j, &x, &solved.policies);
                }
            }
            num += w * (self.utility)(side, &x);
            den += w;
        }
        (den > 0.0).then(|| num / den)
    }

    /// Posterior of `var` given the evidence, under the solved policies.
    pub fn marginal(&self, solved: &Solved, var: usize, evidence: &dyn Fn(&[usize]) -> bool) -> Vec<f64> {
        let mut out = vec![0.0; self.card[var]];
        for (x, cw) in self.support(evidence) {
            let w: f64 = cw * (0..self.stages.len()).map(|j| self.decision_weight(j, &x, &solved.policies)).product::<f64>();
            out[x[var]] += w;
        }
        let total: f64 = out.iter().sum();
        out.iter_mut().for_each(|p| *p /= total);
        out
    }

    /// Per-option expected utility of the stage at the pointer for its
    /// owner, given the evidence.
    pub fn recommendation(&self, solved: &Solved, evidence: &dyn Fn(&[usize]) -> bool, tie: f64) -> (Vec<usize>, f64) {
        let k = solved.pointer;
        let var = self.stages[k];
        let side = self.side(var);
        let eus: Vec<Option<f64>> = (0..self.card[var])
            .map(|s| self.expected(solved, side, &|x: &[usize]| evidence(x) && x[var] == s, Some(k)))
            .collect();
        let best = eus.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
        let max = (0..eus.len()).filter(|&s| eus[s].is_some_and(|v| v >= best - tie)).collect();
        (max, best)
    }
}

/// Mean of a normal (given variance) truncated to `[lo, hi]`, by Simpson's
/// rule on the unnormalized density.
pub fn truncated_normal_mean(mean: f64, variance: f64, lo: f64, hi: f64) -> f64 {
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let dens = |x: f64| (-(x - mean) * (x - mean) / (2.0 * variance)).exp();
    let (mut m0, mut m1) = (0.0, 0.0);
    for i in 0..=n {
        let x = lo + i as f64 * h;
        let c = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        m0 += c * dens(x);
        m1 += c * x * dens(x);
    }
    m1 / m0
}

/// The working-week game with the impact of a successful attack replaced
/// by its mean, which is exact because utilities are linear in it.
///
/// Variable order: D1, A2, D3, A4, D5, S2, S3, S4, S5. `consequence_seen`
/// lists the attacker stages (2 or 4) whose attack is hidden from the
/// defender and replaced by its success indicator.
pub fn working_week(consequence_seen: &[usize]) -> Game {
    const HOURS: [f64; 3] = [0.0, 12.0, 24.0];
    let (d1, a2, d3, a4, d5, s2, s4) = (0, 1, 2, 3, 4, 5, 7);
    let mut means = BTreeMap::new();
    for &a in &HOURS {
        for &d in &HOURS {
            if a > d {
                let key = ((a - d) as i64, 0);
                means.entry(key).or_insert_with(|| truncated_normal_mean((a - d) / 0.24, 400.0, 0.0, 200.0));
            }
        }
    }
    let success = |a_var: usize, d_var: usize| {
        let mut table = Vec::new();
        for a in 0..3 {
            for d in 0..3 {
                let s = HOURS[a] > HOURS[d];
                table.extend(if s { [0.0, 1.0] } else { [1.0, 0.0] });
            }
        }
        Node::Chance {
            parents: vec![a_var, d_var],
            table,
        }
    };
    let hide_a2 = consequence_seen.contains(&2);
    let hide_a4 = consequence_seen.contains(&4);
    let mut d3_info = vec![d1];
    d3_info.push(if hide_a2 { s2 } else { a2 });
    let mut d5_info = vec![d1];
    if !hide_a2 {
        d5_info.push(a2);
    }
    d5_info.push(d3);
    if hide_a4 {
        d5_info.push(s4);
    } else {
        d5_info.push(a4);
    }
    let nodes = vec![
        Node::Decision {
            side: Side::Defender,
            info: vec![],
        },
        Node::Decision {
            side: Side::Attacker,
            info: vec![d1],
        },
        Node::Decision {
            side: Side::Defender,
            info: d3_info,
        },
        Node::Decision {
            side: Side::Attacker,
            info: vec![d1, a2, d3],
        },
        Node::Decision {
            side: Side::Defender,
            info: d5_info,
        },
        success(a2, d1),
        success(a2, d3),
        success(a4, d3),
        success(a4, d5),
    ];
    let utility = move |side: Side, x: &[usize]| {
        let pair = |d: usize, a: usize| {
            let (dh, ah) = (HOURS[x[d]], HOURS[x[a]]);
            let impact = if ah > dh { 0.3 * means[&((ah - dh) as i64, 0)] } else { 0.0 };
            match side {
                Side::Defender => -0.5 * dh - impact,
                Side::Attacker => impact - 0.5 * ah,
            }
        };
        pair(d1, a2) + pair(d3, a2) + pair(d3, a4) + pair(d5, a4)
    };
    Game {
        card: vec![3, 3, 3, 3, 3, 2, 2, 2, 2],
        nodes,
        stages: vec![d1, a2, d3, a4, d5],
        utility: Box::new(utility),
    }
}
