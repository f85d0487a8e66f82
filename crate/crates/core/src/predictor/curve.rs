use std::fmt;

use crate::error::PredictorError;
use crate::money::{Money, Price, Qty};

/// Predicted demand as a non-increasing step function of the unit price.
///
/// Stored as breakpoints `(p_k, q_k)` with prices strictly decreasing and
/// cumulative quantities strictly increasing. `demand(p)` is `q_k` for the
/// last breakpoint whose price is still `>= p`, and zero above every price.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DemandCurve {
    points: Vec<(Money, Qty)>,
}

fn ceil_units(q: Qty) -> i64 {
    q.micros().div_euclid(1_000_000) + i64::from(q.micros().rem_euclid(1_000_000) != 0)
}

impl DemandCurve {
    pub fn empty() -> Self {
        DemandCurve { points: Vec::new() }
    }

    pub fn new(points: Vec<(Money, Qty)>) -> Result<Self, PredictorError> {
        for (i, &(p, q)) in points.iter().enumerate() {
            if p.is_negative() || !q.is_positive() {
                return Err(PredictorError::InvalidCurve(format!("breakpoint {i} has negative price or non-positive quantity")));
            }
            if i > 0 {
                let (pp, pq) = points[i - 1];
                if p >= pp {
                    return Err(PredictorError::InvalidCurve(format!("prices not strictly decreasing at {i}")));
                }
                if q <= pq {
                    return Err(PredictorError::InvalidCurve(format!("quantities not strictly increasing at {i}")));
                }
            }
        }
        Ok(DemandCurve { points })
    }

    /// Flat curve: `quantity` units demanded at any price up to `price`.
    pub fn flat(price: Money, quantity: Qty) -> Self {
        if quantity.is_positive() {
            DemandCurve { points: vec![(price, quantity)] }
        } else {
            DemandCurve::empty()
        }
    }

    /// Aggregates `(unit price, quantity)` contributions into cumulative form.
    pub fn from_contributions(contributions: impl IntoIterator<Item = (Money, Qty)>) -> Self {
        let mut items: Vec<(Money, Qty)> = contributions.into_iter().filter(|(_, q)| q.is_positive()).collect();
        items.sort_unstable_by_key(|b| std::cmp::Reverse(b.0));
        Self::from_sorted(items)
    }

    /// Like [`from_contributions`](Self::from_contributions) for input already sorted by descending price.
    pub fn from_sorted(items: impl IntoIterator<Item = (Money, Qty)>) -> Self {
        let mut points: Vec<(Money, Qty)> = Vec::new();
        let mut total = Qty::ZERO;
        for (p, q) in items {
            if !q.is_positive() {
                continue;
            }
            total += q;
            match points.last_mut() {
                Some(last) if last.0 == p => last.1 = total,
                _ => points.push((p.max(Money::ZERO), total)),
            }
        }
        DemandCurve { points }
    }

    pub fn points(&self) -> &[(Money, Qty)] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_quantity(&self) -> Qty {
        self.points.last().map_or(Qty::ZERO, |p| p.1)
    }

    /// Quantity demanded at unit price `price`.
    pub fn demand(&self, price: Money) -> Qty {
        let n = self.points.partition_point(|&(p, _)| p >= price);
        if n == 0 {
            Qty::ZERO
        } else {
            self.points[n - 1].1
        }
    }

    /// Highest price at which demand reaches `q`.
    ///
    /// `q <= 0` is met by every price (`Price::Infinite`); a `q` above the
    /// largest quantity is met by none.
    pub fn inverse_price(&self, q: Qty) -> Option<Price> {
        if !q.is_positive() {
            return Some(Price::Infinite);
        }
        let k = self.points.partition_point(|&(_, cq)| cq < q);
        self.points.get(k).map(|&(p, _)| Price::Finite(p))
    }

    /// Highest price with demand strictly above `residual`, or zero if there is none.
    ///
    /// `residual` must be nonnegative; units past capacity are priced by the caller.
    pub fn price_exceeding(&self, residual: Qty) -> Money {
        debug_assert!(!residual.is_negative());
        let k = self.points.partition_point(|&(_, cq)| cq <= residual);
        self.points.get(k).map_or(Money::ZERO, |&(p, _)| p)
    }

    /// `sum_{i=1..units} clamp(price_exceeding(free - i))` in O(breakpoints).
    ///
    /// Requires `units <= free`, so every residual is nonnegative.
    pub fn sum_exceeding_prices(&self, free: u64, units: u64, clamp: impl Fn(Money) -> Money) -> Money {
        debug_assert!(units <= free);
        if units == 0 {
            return Money::ZERO;
        }
        // Residuals R run over the integers [free - units, free - 1]; price(R) = p_k on
        // the band ceil(q_{k-1}) <= R <= ceil(q_k) - 1.
        let lo = free as i64 - units as i64;
        let hi = free as i64 - 1;
        let mut total = Money::ZERO;
        let mut counted = 0u64;
        let mut band_lo = i64::MIN;
        for &(p, q) in &self.points {
            let band_hi = ceil_units(q) - 1;
            let a = lo.max(band_lo);
            let b = hi.min(band_hi);
            if a <= b {
                let n = (b - a + 1) as u64;
                total += clamp(p) * n;
                counted += n;
            }
            band_lo = band_hi + 1;
            if band_lo > hi {
                break;
            }
        }
        total + clamp(Money::ZERO) * (units - counted)
    }
}

impl fmt::Display for DemandCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (p, q)) in self.points.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "({p},{q})")?;
        }
        f.write_str("}")
    }
}
