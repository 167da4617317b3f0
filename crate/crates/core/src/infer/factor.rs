/// Dense potential over discrete variables, row-major with the last scope
/// variable varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub card: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, card: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(card.iter().product::<usize>(), values.len());
        Factor { scope, card, values }
    }

    pub fn scalar(v: f64) -> Self {
        Factor::new(Vec::new(), Vec::new(), vec![v])
    }

    /// 1 at `state`, 0 elsewhere.
    pub fn indicator(var: usize, card: usize, state: usize) -> Self {
        let mut values = vec![0.0; card];
        values[state] = 1.0;
        Factor::new(vec![var], vec![card], values)
    }

    pub fn position(&self, var: usize) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }

    fn strides(card: &[usize]) -> Vec<usize> {
        let mut s = vec![1; card.len()];
        for i in (0..card.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * card[i + 1];
        }
        s
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = self.scope.clone();
        let mut card = self.card.clone();
        for (v, c) in other.scope.iter().zip(&other.card) {
            if !scope.contains(v) {
                scope.push(*v);
                card.push(*c);
            }
        }
        let sa_own = Self::strides(&self.card);
        let sb_own = Self::strides(&other.card);
        let sa: Vec<usize> = scope
            .iter()
            .map(|v| self.position(*v).map_or(0, |i| sa_own[i]))
            .collect();
        let sb: Vec<usize> = scope
            .iter()
            .map(|v| other.position(*v).map_or(0, |i| sb_own[i]))
            .collect();
        let n: usize = card.iter().product();
        let k = scope.len();
        let mut values = Vec::with_capacity(n);
        let mut assign = vec![0usize; k];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..n {
            values.push(self.values[ia] * other.values[ib]);
            for d in (0..k).rev() {
                assign[d] += 1;
                ia += sa[d];
                ib += sb[d];
                if assign[d] < card[d] {
                    break;
                }
                ia -= sa[d] * card[d];
                ib -= sb[d] * card[d];
                assign[d] = 0;
            }
        }
        Factor::new(scope, card, values)
    }

    fn split(&self, pos: usize) -> (usize, usize, usize) {
        let outer: usize = self.card[..pos].iter().product();
        let inner: usize = self.card[pos + 1..].iter().product();
        (outer, self.card[pos], inner)
    }

    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let (outer, c, inner) = self.split(pos);
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..c {
                let base = (o * c + k) * inner;
                let dst = &mut values[o * inner..(o + 1) * inner];
                for (d, s) in dst.iter_mut().zip(&self.values[base..base + inner]) {
                    *d += s;
                }
            }
        }
        let mut scope = self.scope.clone();
        let mut card = self.card.clone();
        scope.remove(pos);
        card.remove(pos);
        Factor::new(scope, card, values)
    }

    /// Restricts `var` to `state`, dropping it from the scope.
    pub fn reduce(&self, var: usize, state: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let (outer, c, inner) = self.split(pos);
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * c + state) * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        let mut scope = self.scope.clone();
        let mut card = self.card.clone();
        scope.remove(pos);
        card.remove(pos);
        Factor::new(scope, card, values)
    }

    /// Same potential with the scope permuted into `order`.
    pub fn reorder(&self, order: &[usize]) -> Factor {
        assert_eq!(order.len(), self.scope.len(), "reorder needs the same scope");
        if order == self.scope.as_slice() {
            return self.clone();
        }
        let own = Self::strides(&self.card);
        let card: Vec<usize> = order
            .iter()
            .map(|v| self.card[self.position(*v).expect("variable in scope")])
            .collect();
        let src: Vec<usize> = order.iter().map(|v| own[self.position(*v).unwrap()]).collect();
        let n = self.values.len();
        let k = order.len();
        let mut values = Vec::with_capacity(n);
        let mut assign = vec![0usize; k];
        let mut idx = 0usize;
        for _ in 0..n {
            values.push(self.values[idx]);
            for d in (0..k).rev() {
                assign[d] += 1;
                idx += src[d];
                if assign[d] < card[d] {
                    break;
                }
                idx -= src[d] * card[d];
                assign[d] = 0;
            }
        }
        Factor::new(order.to_vec(), card, values)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn normalized(mut self) -> Factor {
        let t = self.total();
        if t > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= t);
        }
        self
    }

    /// Row-major index of a full assignment given in scope order.
    pub fn index(&self, states: &[usize]) -> usize {
        states
            .iter()
            .zip(&self.card)
            .fold(0, |acc, (s, c)| acc * c + s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_and_marginals() {
        // P(a) * P(b|a), a,b binary.
        let pa = Factor::new(vec![0], vec![2], vec![0.3, 0.7]);
        let pba = Factor::new(vec![0, 1], vec![2, 2], vec![0.9, 0.1, 0.2, 0.8]);
        let joint = pa.product(&pba);
        assert_eq!(joint.scope, vec![0, 1]);
        let pb = joint.sum_out(0);
        assert!((pb.values[1] - (0.3 * 0.1 + 0.7 * 0.8)).abs() < 1e-15);
        let r = joint.reduce(1, 1);
        assert_eq!(r.scope, vec![0]);
        assert!((r.values[0] - 0.03).abs() < 1e-15);
        let t = joint.reorder(&[1, 0]);
        assert_eq!(t.values[t.index(&[1, 0])], joint.values[joint.index(&[0, 1])]);
    }
}
