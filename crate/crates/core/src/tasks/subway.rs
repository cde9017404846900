//! Task 6: count the colored lines joining two labeled stations on a subway map.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{
    quantize, AnswerValue, GenContext, Generated, Params, TaskError, MAX_ATTEMPTS, PALETTE,
};
use crate::geometry::{count_terminal_paths, Circle, GridNode, Point, StationGraph, TransitPath};
use crate::render::{font, Rgb, SceneElement, Shape, Style};

pub const GRID: u32 = 5;
pub const TERMINAL_LABELS: [char; 4] = ['A', 'B', 'C', 'D'];
pub(crate) const ROUTE_WIDTH: f64 = 6.0;
const GRID_MARGIN: f64 = 60.0;
const MAX_ROUTE_EDGES: usize = 12;
const LABEL_SIZE: f64 = 28.0;
const LABEL_OFFSET: f64 = 32.0;
const STATION_GRAY: Rgb = Rgb(150, 150, 150);

type Edge = (GridNode, GridNode);

fn edge(a: GridNode, b: GridNode) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn neighbours(n: GridNode) -> impl Iterator<Item = GridNode> {
    let (c, r) = (n.col as i64, n.row as i64);
    [(c + 1, r), (c - 1, r), (c, r + 1), (c, r - 1)]
        .into_iter()
        .filter(|&(c, r)| (0..GRID as i64).contains(&c) && (0..GRID as i64).contains(&r))
        .map(|(c, r)| GridNode::new(c as u32, r as u32))
}

fn is_corner(n: GridNode) -> bool {
    (n.col == 0 || n.col == GRID - 1) && (n.row == 0 || n.row == GRID - 1)
}

fn border_nodes() -> Vec<GridNode> {
    let mut out = Vec::new();
    for row in 0..GRID {
        for col in 0..GRID {
            let n = GridNode::new(col, row);
            if (col == 0 || row == 0 || col == GRID - 1 || row == GRID - 1) && !is_corner(n) {
                out.push(n);
            }
        }
    }
    out
}

/// Shortest route under random edge weights, avoiding used edges and passing
/// through no terminal other than its own ends.
fn random_route(
    rng: &mut ChaCha8Rng,
    from: GridNode,
    to: GridNode,
    used: &BTreeSet<Edge>,
    terminals: &BTreeSet<GridNode>,
) -> Option<Vec<GridNode>> {
    let mut weights: BTreeMap<Edge, u32> = BTreeMap::new();
    for row in 0..GRID {
        for col in 0..GRID {
            let n = GridNode::new(col, row);
            for m in neighbours(n).filter(|m| n < *m) {
                weights.insert((n, m), rng.random_range(10..40));
            }
        }
    }
    let mut dist: BTreeMap<GridNode, u32> = BTreeMap::from([(from, 0)]);
    let mut prev: BTreeMap<GridNode, GridNode> = BTreeMap::new();
    let mut heap = BinaryHeap::from([Reverse((0u32, from))]);
    while let Some(Reverse((d, n))) = heap.pop() {
        if n == to {
            break;
        }
        if d > dist.get(&n).copied().unwrap_or(u32::MAX) {
            continue;
        }
        if n != from && terminals.contains(&n) {
            continue;
        }
        for m in neighbours(n) {
            let e = edge(n, m);
            if used.contains(&e) {
                continue;
            }
            let nd = d + weights[&e];
            if nd < dist.get(&m).copied().unwrap_or(u32::MAX) {
                dist.insert(m, nd);
                prev.insert(m, n);
                heap.push(Reverse((nd, m)));
            }
        }
    }
    if !dist.contains_key(&to) {
        return None;
    }
    let mut route = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[&cur];
        route.push(cur);
    }
    route.reverse();
    Some(route)
}

pub fn node_position(n: GridNode, size: f64) -> Point {
    let spacing = (size - 2.0 * GRID_MARGIN) / f64::from(GRID - 1);
    Point::new(
        quantize(GRID_MARGIN + f64::from(n.col) * spacing),
        quantize(GRID_MARGIN + f64::from(n.row) * spacing),
    )
}

fn outward(n: GridNode) -> (f64, f64) {
    if n.col == 0 {
        (-1.0, 0.0)
    } else if n.col == GRID - 1 {
        (1.0, 0.0)
    } else if n.row == 0 {
        (0.0, -1.0)
    } else {
        (0.0, 1.0)
    }
}

pub(crate) fn subway_paths(ctx: &GenContext, rng: &mut ChaCha8Rng) -> Result<Generated, TaskError> {
    let k = ctx.ranges.subway_paths.scheduled(ctx.index) as usize;
    let border = border_nodes();
    'attempt: for _ in 0..MAX_ATTEMPTS {
        let picks: Vec<GridNode> = border.choose_multiple(rng, 4).copied().collect();
        let spread = picks.iter().enumerate().all(|(i, a)| {
            picks[i + 1..]
                .iter()
                .all(|b| a.col.abs_diff(b.col) + a.row.abs_diff(b.row) >= 2)
        });
        if !spread {
            continue;
        }
        let stations: BTreeMap<char, GridNode> = TERMINAL_LABELS
            .iter()
            .copied()
            .zip(picks.iter().copied())
            .collect();
        let terminal_set: BTreeSet<GridNode> = picks.iter().copied().collect();

        let distractor_count =
            rng.random_range(ctx.ranges.subway_distractors.min..=ctx.ranges.subway_distractors.max);
        let other_pairs = [('A', 'C'), ('A', 'D'), ('B', 'C'), ('B', 'D'), ('C', 'D')];
        let mut requests: Vec<(char, char)> = vec![('A', 'B'); k];
        for _ in 0..distractor_count {
            requests.push(*other_pairs.choose(rng).expect("non-empty"));
        }
        requests.shuffle(rng);

        let mut colors = PALETTE.to_vec();
        colors.shuffle(rng);
        let mut used = BTreeSet::new();
        let mut paths = Vec::new();
        for (i, (s, t)) in requests.iter().enumerate() {
            let (from, to) = (stations[s], stations[t]);
            let Some(route) = random_route(rng, from, to, &used, &terminal_set) else {
                continue 'attempt;
            };
            if route.len() - 1 > MAX_ROUTE_EDGES {
                continue 'attempt;
            }
            for w in route.windows(2) {
                used.insert(edge(w[0], w[1]));
            }
            paths.push(TransitPath {
                color: colors[i].to_array(),
                nodes: route,
            });
        }
        let graph = StationGraph::new(GRID, GRID, stations, paths, ('A', 'B'))
            .map_err(|e| ctx.layout(e.to_string()))?;
        let truth = count_terminal_paths(&graph);
        if truth != k {
            return Err(ctx.layout(format!("constructed {k} A-B paths but counted {truth}")));
        }
        return Ok(Generated {
            scene: draw(ctx, &graph)?,
            ground_truth: AnswerValue::Count(truth as u32),
            params: {
                let mut p = Params::new();
                p.insert("ab_paths".into(), json!(k));
                p.insert("distractors".into(), json!(distractor_count));
                p.insert(
                    "stations".into(),
                    json!(graph
                        .stations()
                        .iter()
                        .map(|(l, n)| (l.to_string(), [n.col, n.row]))
                        .collect::<BTreeMap<_, _>>()),
                );
                p
            },
        });
    }
    Err(ctx.exhausted())
}

fn draw(ctx: &GenContext, graph: &StationGraph) -> Result<crate::render::Scene, TaskError> {
    let mut scene = ctx.blank_scene()?;
    let err = |e: crate::geometry::GeometryError| ctx.layout(e.to_string());
    for row in 0..GRID {
        for col in 0..GRID {
            let dot =
                Circle::new(node_position(GridNode::new(col, row), ctx.size), 4.0).map_err(err)?;
            scene.push(
                SceneElement::new(
                    Shape::Circle(dot),
                    Style::stroke(STATION_GRAY, 1.0).with_fill(STATION_GRAY),
                )
                .tagged("station"),
            )?;
        }
    }
    for path in graph.paths() {
        let pts = path
            .nodes
            .iter()
            .map(|n| node_position(*n, ctx.size))
            .collect();
        let [r, g, b] = path.color;
        scene.push(
            SceneElement::new(
                Shape::Polyline(pts),
                Style::stroke(Rgb(r, g, b), ROUTE_WIDTH),
            )
            .tagged("route"),
        )?;
    }
    for (label, node) in graph.stations() {
        let at = node_position(*node, ctx.size);
        let marker = Circle::new(at, 11.0).map_err(err)?;
        scene.push(
            SceneElement::new(
                Shape::Circle(marker),
                Style::stroke(Rgb::BLACK, 3.0).with_fill(Rgb::WHITE),
            )
            .tagged("terminal"),
        )?;
        let (dx, dy) = outward(*node);
        let origin = Point::new(
            quantize(at.x + dx * LABEL_OFFSET - font::advance(LABEL_SIZE) / 2.0),
            quantize(at.y + dy * LABEL_OFFSET - font::line_height(LABEL_SIZE) / 2.0),
        );
        scene.push(
            SceneElement::new(
                Shape::Glyphs {
                    text: label.to_string(),
                    origin,
                    font_size: LABEL_SIZE,
                },
                Style::stroke(Rgb::BLACK, 1.0),
            )
            .tagged("label"),
        )?;
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn routes_respect_used_edges_and_terminals() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = GridNode::new(0, 2);
        let b = GridNode::new(4, 2);
        let blocker = GridNode::new(2, 0);
        let terminals = BTreeSet::from([a, b, blocker]);
        let mut used = BTreeSet::new();
        for _ in 0..3 {
            let route = random_route(&mut rng, a, b, &used, &terminals).unwrap();
            assert_eq!(route.first(), Some(&a));
            assert_eq!(route.last(), Some(&b));
            assert!(!route[1..route.len() - 1].contains(&blocker));
            for w in route.windows(2) {
                assert!(used.insert(edge(w[0], w[1])), "edge reused");
            }
        }
        // A has three edges, all now used
        assert!(random_route(&mut rng, a, b, &used, &terminals).is_none());
    }

    #[test]
    fn border_excludes_corners() {
        let border = border_nodes();
        assert_eq!(border.len(), 12);
        assert!(border.iter().all(|n| !is_corner(*n)));
    }
}
